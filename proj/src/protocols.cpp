#include "vanet/protocols.hpp"

#include <stdexcept>

namespace vanet::mac {

std::string_view to_string(MacAction a) {
  switch (a) {
    case MacAction::KeepSensing: return "keep_sensing";
    case MacAction::StartTx: return "start_tx";
    case MacAction::ContinueTx: return "continue_tx";
    case MacAction::AbortTx: return "abort_tx";
    case MacAction::StartBackoff: return "start_backoff";
    case MacAction::DecrementCounter: return "decrement_counter";
    case MacAction::FreezeCounter: return "freeze_counter";
    case MacAction::ReattemptNextSlot: return "reattempt_next_slot";
  }
  return "?";
}

int reattempt_budget(Protocol kind, Priority prio) {
  if (kind != Protocol::Pbma) return 0;
  switch (prio) {
    case Priority::Critical: return 2;
    case Priority::Emergency: return 1;
    case Priority::Normal: return 0;
  }
  return 0;
}

bool detector_active(Protocol kind, const MacState& state, const MacParams& params) {
  return kind != Protocol::HdEdca && state.phase == Phase::Transmitting &&
         state.elapsed < params.cd_windows;
}

MacAction advance(Protocol kind, const MacState& state, Sensed sensed, Priority prio,
                  const MacParams& params) {
  const bool persistent = kind == Protocol::Pbma && prio != Priority::Normal;
  switch (state.phase) {
    case Phase::Idle:
      throw ProtocolViolation("advance called without a pending frame");
    case Phase::Sensing:
      if (sensed == Sensed::Idle) return MacAction::StartTx;
      if (sensed != Sensed::Busy) throw ProtocolViolation("sensing phase needs idle/busy");
      return persistent ? MacAction::KeepSensing : MacAction::StartBackoff;
    case Phase::Backoff: {
      if (sensed == Sensed::Busy) return MacAction::FreezeCounter;
      if (sensed != Sensed::Idle) throw ProtocolViolation("backoff phase needs idle/busy");
      const MacState next = apply(state, MacAction::DecrementCounter, 0, params);
      if (next.aifs_idle >= params.aifs_slots && next.counter == 0) return MacAction::StartTx;
      return MacAction::DecrementCounter;
    }
    case Phase::Transmitting:
      if (kind == Protocol::HdEdca || sensed != Sensed::Collision) return MacAction::ContinueTx;
      if (!detector_active(kind, state, params)) {
        throw ProtocolViolation("collision reported while the detector is off");
      }
      if (state.reattempts_used < reattempt_budget(kind, prio)) {
        return MacAction::ReattemptNextSlot;
      }
      return MacAction::AbortTx;
    case Phase::Aborted:
      return MacAction::StartBackoff;
  }
  throw ProtocolViolation("unknown phase");
}

MacState apply(const MacState& state, MacAction action, int draw, const MacParams& params) {
  MacState s = state;
  switch (action) {
    case MacAction::KeepSensing: break;
    case MacAction::StartTx:
      s.phase = Phase::Transmitting;
      s.elapsed = 0;
      break;
    case MacAction::ContinueTx: ++s.elapsed; break;
    case MacAction::AbortTx: s.phase = Phase::Aborted; break;
    case MacAction::StartBackoff:
      s.phase = Phase::Backoff;
      s.counter = draw;
      s.aifs_idle = 0;
      break;
    case MacAction::DecrementCounter:
      if (s.aifs_idle < params.aifs_slots) {
        ++s.aifs_idle;
      } else if (s.counter > 0) {
        --s.counter;
      }
      break;
    case MacAction::FreezeCounter: s.aifs_idle = 0; break;
    case MacAction::ReattemptNextSlot:
      s.phase = Phase::Transmitting;
      s.elapsed = 0;
      ++s.reattempts_used;
      break;
  }
  return s;
}

int draw_backoff(int w, Rng& rng) {
  if (w < 1) throw std::invalid_argument("draw_backoff: window must be >= 1");
  return static_cast<int>(uniform01(rng) * w);
}

}  // namespace vanet::mac
