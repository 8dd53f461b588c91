#include "fbl/monitor.hpp"

namespace fbl::monitor {

Scalar average_entropy(const net::NetworkParams& model,
                       const std::vector<synth::Sample>& shard, bool normalize) {
  if (shard.empty()) throw ConfigError("average_entropy: empty shard");
  Scalar total = 0;
  for (const synth::Sample& s : shard) {
    const net::ForwardTrace t = net::forward(model, s.image, s.height, s.width);
    Scalar image_sum = entropy_rows(t.probs).sum();
    if (normalize) image_sum /= static_cast<Scalar>(s.height * s.width);
    total += image_sum;
  }
  return total / static_cast<Scalar>(shard.size());
}

bool detect_transition(const EntropyHistory& history, Scalar current, Scalar tau) {
  if (history.records.empty()) return false;
  return current - history.records.back().value >= tau;
}

void on_transition(TransitionState& state) {
  if (!state.last_broadcast) {
    throw ProtocolError("on_transition: no previous-round model retained");
  }
  state.old_model = state.last_broadcast;
  state.task_estimate += 1;
  state.epochs_in_task = 0;
  state.history.records.clear();
}

bool observe_entropy(TransitionState& state, int round, Scalar value, Scalar tau) {
  if (state.rise_watermark) {
    state.rise_declines = value < state.rise_last_value ? state.rise_declines + 1 : 0;
    state.rise_last_value = value;
    if (value > *state.rise_watermark) state.rise_watermark = value;
    // The rise counts as settled only after two consecutive declines; until
    // then nothing is recorded and nothing can fire.
    if (state.rise_declines < 2) return false;
    state.rise_watermark.reset();
  }
  if (detect_transition(state.history, value, tau)) {
    on_transition(state);
    state.rise_watermark = value;
    state.rise_last_value = value;
    state.rise_declines = 0;
    return true;
  }
  state.history.records.push_back({round, state.task_estimate, value});
  return false;
}

}  // namespace fbl::monitor
