#include "blcl/evaluate.hpp"

#include <cstdio>

namespace blcl::metrics {

InferenceOutputs run_inference(nn::ModelState& model,
                               const std::vector<const data::LabeledImage*>& samples,
                               int batch_size) {
  InferenceOutputs out;
  out.embeddings.resize(static_cast<Eigen::Index>(samples.size()),
                        model.plan.embedding_dim);
  std::size_t done = 0;
  while (done < samples.size()) {
    const std::size_t end =
        std::min(done + static_cast<std::size_t>(batch_size), samples.size());
    std::vector<const data::LabeledImage*> chunk(samples.begin() + done,
                                                 samples.begin() + end);
    auto fwd = nn::forward(model, data::make_batch_tensor(chunk), false);
    for (int r = 0; r < fwd.logits.rows; ++r) {
      int best = 0;
      for (int c = 1; c < fwd.logits.cols; ++c)
        if (fwd.logits.at(r, c) > fwd.logits.at(r, best)) best = c;
      out.pred_rows.push_back(best);
      for (int c = 0; c < fwd.embedding.cols; ++c)
        out.embeddings(static_cast<Eigen::Index>(done) + r, c) =
            fwd.embedding.at(r, c);
    }
    done = end;
  }
  return out;
}

void export_embeddings(nn::ModelState& model,
                       const std::vector<const data::LabeledImage*>& samples,
                       std::ostream& out, int batch_size) {
  InferenceOutputs res = run_inference(model, samples, batch_size);
  out << "id,label";
  for (int c = 0; c < model.plan.embedding_dim; ++c) out << ",e" << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples[i]->id << ',' << samples[i]->label;
    for (int c = 0; c < model.plan.embedding_dim; ++c) {
      // %.9g round-trips float exactly
      std::snprintf(buf, sizeof(buf), "%.9g",
                    static_cast<float>(res.embeddings(static_cast<Eigen::Index>(i), c)));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace blcl::metrics
