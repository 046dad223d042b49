// Trains the baseline pointer-generator on the copy-span task and decodes a
// few held-out articles, marking which output words were copied.
//
//   demo_copy_task [steps=600] [documents=3]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "gpg/train.hpp"

int main(int argc, char** argv) {
  using namespace gpg;
  TrainingConfig cfg;
  cfg.steps = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 600;
  const std::size_t shown = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 3;
  cfg.task = {SyntheticTask::CopySpan, 200, 30, 0.1, 7};

  auto vocab = synthetic_vocabulary(cfg.task);
  auto result = train(cfg, init_parameters(vocab.size(), cfg.model), synthetic_source(cfg.task, vocab, cfg.model),
                      [](const LossRecord& r) {
                        if (r.step % 100 == 0) std::printf("step %4zu  nll %.4f\n", r.step, r.nll);
                      });

  double accuracy = 0.0;
  for (std::size_t k = 0; k < shown; ++k) {
    auto doc = prepare_document(generate_document(cfg.task, kHeldOutOffset + k), vocab, cfg.model);
    auto trace = decode_greedy(result.params, cfg.model, doc, vocab, cfg.model.max_decode);
    auto summary = summary_tokens(trace);
    accuracy += token_accuracy(summary, doc.summary);

    std::printf("\n%s\n  reference:", doc.id.c_str());
    for (const auto& w : doc.summary) std::printf(" %s", w.c_str());
    std::printf("\n  decoded:  ");
    for (std::size_t i = 0; i < summary.size(); ++i) {
      // OOV words can only have come from the copy distribution.
      const bool oov = trace.steps[i].token >= vocab.size();
      std::printf(" %s%s", summary[i].c_str(), oov ? "*" : "");
    }
    std::printf("\n  p_gen:    ");
    for (const auto& s : trace.steps) std::printf(" %.2f", s.p_gen);
    std::printf("\n");
  }
  if (shown) std::printf("\ntoken accuracy %.3f  (* = out-of-vocabulary, copied)\n", accuracy / double(shown));
}
