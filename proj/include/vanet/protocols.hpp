#pragma once

// Per-slot MAC transition functions for HD EDCA, FD EDCA and PBMA.

#include <stdexcept>
#include <string_view>

#include "vanet/rng.hpp"
#include "vanet/types.hpp"

namespace vanet::mac {

enum class Phase { Idle, Sensing, Backoff, Transmitting, Aborted };

enum class MacAction {
  KeepSensing,
  StartTx,
  ContinueTx,
  AbortTx,
  StartBackoff,
  DecrementCounter,  // idle slot: AIFS progress, then counter decrement
  FreezeCounter,
  ReattemptNextSlot,
};

std::string_view to_string(MacAction a);

/// What the vehicle observed in the current slot.
enum class Sensed {
  Idle,
  Busy,
  Clear,      // own transmission, no collision seen
  Collision,  // own transmission, collision seen
  None,       // own transmission, detector not active
};

struct MacParams {
  int w = 16;
  int aifs_slots = 5;
  int tx_slots = 36;
  int cd_windows = 3;  // in-transmission sensing windows at the start of each attempt
};

struct MacState {
  Phase phase = Phase::Idle;
  int counter = 0;
  int aifs_idle = 0;
  int elapsed = 0;          // on-air slots of the current attempt
  int reattempts_used = 0;  // per frame
};

/// Immediate re-attempts granted after a detected in-transmission collision.
int reattempt_budget(Protocol kind, Priority prio);

/// True when the protocol senses for collisions in the current slot of its own attempt.
bool detector_active(Protocol kind, const MacState& state, const MacParams& params);

/// Decides the action for this slot.
MacAction advance(Protocol kind, const MacState& state, Sensed sensed, Priority prio,
                  const MacParams& params);

/// Applies an action. `draw` is the fresh counter used by StartBackoff.
MacState apply(const MacState& state, MacAction action, int draw, const MacParams& params);

/// Uniform backoff counter on [0, w - 1].
int draw_backoff(int w, Rng& rng);

/// Thrown when a state / action pair breaks a protocol invariant.
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace vanet::mac
