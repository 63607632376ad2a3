#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace affalign::train {

struct TrainConfig {
  double lambda = 0.5;
  std::size_t batch_size = 16;
  std::size_t total_steps = 3000;
  std::size_t warmup_steps = 300;
  double peak_lr = 1e-3;
  double final_lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool align_enabled = true;

  // Throws UsageError when an invariant fails.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// `key = value` lines; '#' starts a comment. Keys are the field names
// above. Unknown keys, repeated keys and malformed values throw UsageError
// naming the line.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::string& path);
// Canonical text form accepted by parse_config.
std::string format_config(const TrainConfig& cfg);

// Learning rate applied by the update numbered `step` (1-based; step 0 is
// the ramp origin): linear warmup to peak_lr, then cosine decay to
// final_lr at total_steps. Throws UsageError outside [0, total_steps].
double lr_at(std::size_t step, const TrainConfig& cfg);

}  // namespace affalign::train
