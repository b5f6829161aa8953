#include <array>
#include <cmath>

#include "doctest.h"
#include "vanet/protocols.hpp"

using namespace vanet;
using namespace vanet::mac;

namespace {

constexpr Protocol kKinds[] = {Protocol::HdEdca, Protocol::FdEdca, Protocol::Pbma};
constexpr Priority kPrios[] = {Priority::Critical, Priority::Emergency, Priority::Normal};

MacState transmitting(int elapsed = 0, int used = 0) {
  MacState s;
  s.phase = Phase::Transmitting;
  s.elapsed = elapsed;
  s.reattempts_used = used;
  return s;
}

MacState sensing() {
  MacState s;
  s.phase = Phase::Sensing;
  return s;
}

// Feeds detected collisions at the start of each attempt until the frame backs off.
int collisions_until_backoff(Protocol kind, Priority prio) {
  const MacParams p;
  MacState s = transmitting();
  for (int n = 1; n < 10; ++n) {
    const MacAction a = advance(kind, s, Sensed::Collision, prio, p);
    s = apply(s, a, 0, p);
    if (a == MacAction::AbortTx) {
      CHECK(advance(kind, s, Sensed::None, prio, p) == MacAction::StartBackoff);
      return n;
    }
    REQUIRE(a == MacAction::ReattemptNextSlot);
  }
  return -1;
}

}  // namespace

TEST_CASE("worked transitions") {
  const MacParams p;
  CHECK(advance(Protocol::HdEdca, transmitting(), Sensed::Collision, Priority::Critical, p) ==
        MacAction::ContinueTx);
  CHECK(advance(Protocol::Pbma, transmitting(), Sensed::Collision, Priority::Critical, p) ==
        MacAction::ReattemptNextSlot);
  CHECK(advance(Protocol::Pbma, transmitting(0, 1), Sensed::Collision, Priority::Emergency, p) ==
        MacAction::AbortTx);
  CHECK(collisions_until_backoff(Protocol::Pbma, Priority::Emergency) == 2);
  CHECK(collisions_until_backoff(Protocol::Pbma, Priority::Critical) == 3);
  CHECK(collisions_until_backoff(Protocol::Pbma, Priority::Normal) == 1);
  CHECK(collisions_until_backoff(Protocol::FdEdca, Priority::Critical) == 1);
}

TEST_CASE("pre-transmission sensing") {
  const MacParams p;
  for (Protocol k : kKinds) {
    for (Priority pr : kPrios) {
      CHECK(advance(k, sensing(), Sensed::Idle, pr, p) == MacAction::StartTx);
      const MacAction busy = advance(k, sensing(), Sensed::Busy, pr, p);
      const bool persistent = k == Protocol::Pbma && pr != Priority::Normal;
      CHECK(busy == (persistent ? MacAction::KeepSensing : MacAction::StartBackoff));
    }
  }
}

TEST_CASE("action sets per protocol") {
  const MacParams p;
  const std::array<Sensed, 5> all{Sensed::Idle, Sensed::Busy, Sensed::Clear, Sensed::Collision,
                                  Sensed::None};
  for (Protocol k : kKinds) {
    for (Priority pr : kPrios) {
      for (int used = 0; used <= 2; ++used) {
        for (int el = 0; el < p.tx_slots; ++el) {
          for (Sensed s : all) {
            MacAction a;
            try {
              a = advance(k, transmitting(el, used), s, pr, p);
            } catch (const ProtocolViolation&) {
              CHECK(k != Protocol::HdEdca);
              CHECK(s == Sensed::Collision);
              CHECK(el >= p.cd_windows);
              continue;
            }
            if (k == Protocol::HdEdca) CHECK(a == MacAction::ContinueTx);
            if (k != Protocol::Pbma || pr == Priority::Normal) CHECK(a != MacAction::ReattemptNextSlot);
            if (a == MacAction::ReattemptNextSlot) CHECK(used < reattempt_budget(k, pr));
          }
        }
      }
    }
  }
}

TEST_CASE("reattempt budgets") {
  for (Priority pr : kPrios) {
    CHECK(reattempt_budget(Protocol::HdEdca, pr) == 0);
    CHECK(reattempt_budget(Protocol::FdEdca, pr) == 0);
  }
  CHECK(reattempt_budget(Protocol::Pbma, Priority::Critical) == 2);
  CHECK(reattempt_budget(Protocol::Pbma, Priority::Emergency) == 1);
  CHECK(reattempt_budget(Protocol::Pbma, Priority::Normal) == 0);
}

TEST_CASE("detector window") {
  MacParams p;
  p.cd_windows = 3;
  for (int el = 0; el < 10; ++el) {
    CHECK(detector_active(Protocol::FdEdca, transmitting(el), p) == (el < 3));
    CHECK_FALSE(detector_active(Protocol::HdEdca, transmitting(el), p));
  }
  CHECK_FALSE(detector_active(Protocol::Pbma, sensing(), p));
}

TEST_CASE("backoff freeze and countdown") {
  MacParams p;
  p.aifs_slots = 2;
  MacState s = apply(sensing(), MacAction::StartBackoff, 3, p);
  CHECK(s.phase == Phase::Backoff);
  CHECK(s.counter == 3);

  // one idle AIFS slot then busy: AIFS restarts, counter untouched
  s = apply(s, advance(Protocol::FdEdca, s, Sensed::Idle, Priority::Normal, p), 0, p);
  CHECK(s.aifs_idle == 1);
  const MacAction frz = advance(Protocol::FdEdca, s, Sensed::Busy, Priority::Normal, p);
  CHECK(frz == MacAction::FreezeCounter);
  s = apply(s, frz, 0, p);
  CHECK(s.aifs_idle == 0);
  CHECK(s.counter == 3);

  int idle_slots = 0;
  for (;;) {
    const MacAction a = advance(Protocol::FdEdca, s, Sensed::Idle, Priority::Normal, p);
    ++idle_slots;
    if (a == MacAction::StartTx) break;
    CHECK(a == MacAction::DecrementCounter);
    const int before = s.counter;
    s = apply(s, a, 0, p);
    CHECK(s.counter <= before);
    CHECK(s.counter >= 0);
  }
  // two AIFS slots and three decrements, the last slot starts the frame
  CHECK(idle_slots == 2 + 3);

  MacState zero = apply(sensing(), MacAction::StartBackoff, 0, p);
  CHECK(advance(Protocol::HdEdca, zero, Sensed::Idle, Priority::Normal, p) == MacAction::DecrementCounter);
  zero = apply(zero, MacAction::DecrementCounter, 0, p);
  CHECK(advance(Protocol::HdEdca, zero, Sensed::Idle, Priority::Normal, p) == MacAction::StartTx);
}

TEST_CASE("aborted phase always backs off") {
  MacState s;
  s.phase = Phase::Aborted;
  for (Protocol k : kKinds)
    for (Priority pr : kPrios) CHECK(advance(k, s, Sensed::None, pr, MacParams{}) == MacAction::StartBackoff);
  CHECK_THROWS_AS(advance(Protocol::FdEdca, MacState{}, Sensed::Idle, Priority::Normal, MacParams{}),
                  ProtocolViolation);
  CHECK_THROWS_AS(advance(Protocol::FdEdca, sensing(), Sensed::Clear, Priority::Normal, MacParams{}),
                  ProtocolViolation);
}

TEST_CASE("reattempt bookkeeping") {
  const MacParams p;
  MacState s = transmitting(1, 0);
  s = apply(s, MacAction::ReattemptNextSlot, 0, p);
  CHECK(s.phase == Phase::Transmitting);
  CHECK(s.elapsed == 0);
  CHECK(s.reattempts_used == 1);
  s = apply(s, MacAction::ContinueTx, 0, p);
  CHECK(s.elapsed == 1);
}

TEST_CASE("draw_backoff uniformity") {
  Rng one = make_rng(1, 0);
  for (int i = 0; i < 100; ++i) CHECK(draw_backoff(1, one) == 0);

  Rng rng = make_rng(2024, 0);
  std::array<int, 16> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int d = draw_backoff(16, rng);
    REQUIRE(d >= 0);
    REQUIRE(d < 16);
    ++counts[d];
  }
  double chi2 = 0;
  for (int c : counts) {
    CHECK(std::abs(c / double(n) - 0.0625) < 0.005);
    chi2 += (c - n / 16.0) * (c - n / 16.0) / (n / 16.0);
  }
  // 15 degrees of freedom, 99.9% quantile
  CHECK(chi2 < 37.70);

  Rng a = make_rng(5, 3), b = make_rng(5, 3);
  for (int i = 0; i < 50; ++i) CHECK(draw_backoff(32, a) == draw_backoff(32, b));
  CHECK_THROWS(draw_backoff(0, a));
}

TEST_CASE("action names") {
  CHECK(to_string(MacAction::ReattemptNextSlot) == "reattempt_next_slot");
  CHECK(to_string(MacAction::KeepSensing) == "keep_sensing");
}
