#ifndef FBL_MONITOR_HPP
#define FBL_MONITOR_HPP

#include "fbl/network.hpp"
#include "fbl/synth_data.hpp"
#include "fbl/types.hpp"

namespace fbl::monitor {

struct EntropyRecord {
  int round = 0;
  int task_estimate = 0;
  Scalar value = 0;
};

struct EntropyHistory {
  std::vector<EntropyRecord> records;
};

// Mean over samples of the pixel-summed prediction entropy. With normalize
// set, the sum is divided by the pixel count (per-pixel scale).
Scalar average_entropy(const net::NetworkParams& model,
                       const std::vector<synth::Sample>& shard,
                       bool normalize = false);

// True when a previous-round entropy exists and the rise reaches tau.
bool detect_transition(const EntropyHistory& history, Scalar current, Scalar tau);

// Everything a client tracks to recognize new classes on its own: its entropy
// trail, the broadcast retained from the previous round, and the model frozen
// at the last detected transition.
struct TransitionState {
  EntropyHistory history;
  std::optional<net::NetworkParams> last_broadcast;
  std::optional<net::NetworkParams> old_model;
  int task_estimate = 1;
  int epochs_in_task = 0;
  // Peak of the rise that fired the last transition; entropy is not recorded
  // again until the rise has settled (two consecutive declines), so one rise
  // cannot fire twice even when it arrives in several round-sized steps.
  std::optional<Scalar> rise_watermark;
  Scalar rise_last_value = 0;
  int rise_declines = 0;
};

// Applies a detected transition: the previous round's broadcast becomes the
// old model, the task estimate advances, and the entropy baseline resets so
// the same rise cannot fire twice.
void on_transition(TransitionState& state);

// Per-round bookkeeping: checks the new entropy value against the recorded
// trail, applies the transition when it fires, and records the value once any
// post-transition rise has completed. Returns true when a transition fired.
bool observe_entropy(TransitionState& state, int round, Scalar value, Scalar tau);

}  // namespace fbl::monitor

#endif  // FBL_MONITOR_HPP
