// Renders one object from a dozen random viewpoints and runs an untrained
// network over it, printing class probabilities and the part correlation.

#include <cstdio>

#include "panet/panet.hpp"

int main() {
  using namespace panet;
  const ModelConfig cfg = ModelConfig::defaults();
  const ModelParams params = ModelParams::initialize(cfg, 42);

  Shape shape = apply_pose_regime(generate_shape(2, 7), PoseRegime::rotated, 7);
  const MultiViewSample sample = make_sample(shape, sample_viewpoints_random(12, 7), cfg.resolution);

  const ForwardResult r = forward(params, sample);
  std::printf("label %u, %zu views\n", sample.label, sample.view_count());
  for (std::size_t k = 0; k < cfg.num_classes; ++k) std::printf("  p[%zu] = %.4f\n", k, r.probs[k]);
  std::printf("predicted %u\n", argmax(r.probs.data()));
  std::printf("part mean |offdiag corr| %.4f\n", mean_offdiag(part_correlation(r.global_parts)));
  return 0;
}
