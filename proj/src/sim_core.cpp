#include "vanet/sim_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <random>
#include <unordered_map>
#include <utility>

namespace vanet::sim {

void SimConfig::validate() const {
  timings.validate();
  mix.validate();
  if (!(beta >= 0.0)) throw ConfigError("sim: beta must be >= 0");
  if (!(r_tx > 0.0 && r_sens > r_tx)) throw ConfigError("sim: need r_sens > r_tx > 0");
  if (!(duration >= timings.t_cam)) throw ConfigError("sim: duration must be >= t_cam");
  if (!(road_length >= 4.0 * r_sens)) throw ConfigError("sim: road_length must be >= 4 r_sens");
  if (w < 1) throw ConfigError("sim: contention window must be >= 1");
  if (cd_windows < 1) throw ConfigError("sim: cd_windows must be >= 1");
  if (std::ceil(timings.t_h / timings.t_slot - 1e-9) != 1.0) {
    throw ConfigError("sim: sensing duration must fit in one slot");
  }
  if (signal_level) {
    signal_sensing.cfg.validate();
  } else {
    abstract_sensing.before.validate();
    abstract_sensing.during.validate();
  }
  if (positions) {
    for (double x : *positions) {
      if (!(x >= 0.0 && x < road_length)) throw ConfigError("sim: position outside the road");
    }
    if (first_gen_slots && first_gen_slots->size() != positions->size()) {
      throw ConfigError("sim: first_gen_slots must match positions");
    }
  }
}

SlotPlan slot_plan(const SimConfig& cfg) {
  const auto& t = cfg.timings;
  SlotPlan p{};
  p.cam_slots = std::llround(t.t_cam / t.t_slot);
  p.tx_slots = static_cast<int>(std::ceil(t.t_pkt / t.t_slot - 1e-9));
  p.sense_slots = static_cast<int>(std::ceil(t.t_h / t.t_slot - 1e-9));
  p.aifs_slots = static_cast<int>(std::ceil(t.t_aifs / t.t_slot - 1e-9));
  p.intervals = std::llround(cfg.duration / t.t_slot) / p.cam_slots;
  return p;
}

std::vector<double> spawn_topology(double beta, double road_length, std::uint64_t seed) {
  std::vector<double> xs;
  if (beta <= 0.0) return xs;
  Rng rng = make_rng(seed, 0);
  std::poisson_distribution<long long> count(beta * road_length);
  const long long n = count(rng);
  xs.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) xs.push_back(uniform01(rng) * road_length);
  std::sort(xs.begin(), xs.end());
  return xs;
}

double road_distance(double a, double b, double road_length, bool wrap) {
  const double d = std::abs(a - b);
  return wrap ? std::min(d, road_length - d) : d;
}

CollisionKind classify_interference(double sender, double other,
                                    const std::vector<double>& sorted_positions,
                                    double r_sens, double r_tx, double road_length, bool wrap) {
  if (road_distance(sender, other, road_length, wrap) <= r_sens) return CollisionKind::Direct;
  for (double rx : sorted_positions) {
    if (rx == sender) continue;
    if (road_distance(rx, sender, road_length, wrap) <= r_tx &&
        road_distance(rx, other, road_length, wrap) <= r_tx) {
      return CollisionKind::Hidden;
    }
  }
  return CollisionKind::None;
}

mac::Sensed sense_decision(bool other_in_range, bool during_tx, const SimConfig& cfg,
                           phy::StatisticSampler* sampler, Rng& rng) {
  bool hit;
  if (cfg.signal_level && sampler) {
    using phy::Hypothesis;
    const Hypothesis h = during_tx ? (other_in_range ? Hypothesis::SelfPlusOther : Hypothesis::SelfOnly)
                                   : (other_in_range ? Hypothesis::Other : Hypothesis::NoiseOnly);
    const double eps = during_tx ? cfg.signal_sensing.thresholds.eps1
                                 : cfg.signal_sensing.thresholds.eps0;
    hit = sampler->draw(h, rng) > eps;
  } else {
    const auto& d = during_tx ? cfg.abstract_sensing.during : cfg.abstract_sensing.before;
    hit = bernoulli(rng, other_in_range ? d.pd : d.pf);
  }
  if (during_tx) return hit ? mac::Sensed::Collision : mac::Sensed::Clear;
  return hit ? mac::Sensed::Busy : mac::Sensed::Idle;
}

PriorityCounts SimReport::totals() const {
  PriorityCounts t;
  for (const auto& c : by_priority) {
    t.generated += c.generated;
    t.delivered += c.delivered;
    t.collided += c.collided;
    t.expired += c.expired;
    t.attempts += c.attempts;
    t.collided_attempts += c.collided_attempts;
  }
  return t;
}

double SimReport::collision_probability() const {
  return attempts ? static_cast<double>(collided_attempts) / static_cast<double>(attempts) : 0.0;
}

double SimReport::mean_collision_duration() const {
  return collision_events ? static_cast<double>(collided_air_slots) * t_slot /
                                static_cast<double>(collision_events)
                          : 0.0;
}

double SimReport::wasted_airtime_per_attempt() const {
  return attempts ? static_cast<double>(collided_air_slots) * t_slot / static_cast<double>(attempts)
                  : 0.0;
}

double SimReport::mean_waiting() const {
  return waited_frames ? static_cast<double>(waiting_slots) * t_slot /
                             static_cast<double>(waited_frames)
                       : 0.0;
}

double SimReport::throughput() const {
  if (vehicles == 0 || intervals == 0) return 0.0;
  const double delivered = static_cast<double>(totals().delivered);
  return delivered / static_cast<double>(intervals) * n_tx / static_cast<double>(vehicles);
}

double SimReport::success_rate(Priority p) const {
  const auto& c = by_priority[index_of(p)];
  return c.generated ? static_cast<double>(c.delivered) / static_cast<double>(c.generated) : 0.0;
}

namespace {

struct Frame {
  Priority prio = Priority::Normal;
  std::int64_t gen = 0;
  std::int64_t expiry = 0;
  std::int64_t first_air = -1;
  bool any_collision = false;
};

struct Vehicle {
  double x = 0.0;
  Rng gen_rng;
  Rng mac_rng;
  mac::MacState st;
  bool has_frame = false;
  Frame frame;
  std::optional<Frame> queued;
  std::int64_t next_interval = 0;
  std::int64_t offset_override = -1;
  // current attempt
  int attempt_air = 0;
  bool attempt_direct = false;
  bool attempt_hidden = false;
  bool chain_collided = false;
  // scratch per slot
  bool direct_now = false;
};

Priority sample_priority(const model::PriorityMix& mix, double u) {
  if (u < mix.p_gc) return Priority::Critical;
  if (u < mix.p_gc + mix.p_ge) return Priority::Emergency;
  return Priority::Normal;
}

class Engine {
 public:
  explicit Engine(const SimConfig& cfg) : cfg_(cfg), plan_(slot_plan(cfg)) {
    params_.w = cfg.w;
    params_.aifs_slots = plan_.aifs_slots;
    params_.tx_slots = plan_.tx_slots;
    params_.cd_windows = cfg.cd_windows;
    if (cfg.signal_level) sampler_.emplace(cfg.signal_sensing.cfg);

    positions_ = cfg.positions ? *cfg.positions : spawn_topology(cfg.beta, cfg.road_length, cfg.seed);
    sorted_ = positions_;
    std::sort(sorted_.begin(), sorted_.end());
    vehicles_.resize(positions_.size());
    pending_prio_.assign(positions_.size(), Priority::Normal);
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      Vehicle& v = vehicles_[i];
      v.x = positions_[i];
      v.gen_rng = make_rng(cfg.seed, 1 + 2 * i);
      v.mac_rng = make_rng(cfg.seed, 2 + 2 * i);
      if (cfg.first_gen_slots) v.offset_override = (*cfg.first_gen_slots)[i];
      schedule_next(static_cast<int>(i));
    }
    report_.vehicles = static_cast<int>(vehicles_.size());
    report_.intervals = plan_.intervals;
    report_.n_tx = 2.0 * cfg.r_sens * cfg.beta;
    report_.t_slot = cfg.timings.t_slot;
  }

  SimReport run() {
    std::int64_t t = 0;
    while (!events_.empty() || !active_.empty()) {
      if (active_.empty()) t = std::max(t, events_.top().first);
      step(t);
      ++t;
    }
    return std::move(report_);
  }

 private:
  using Event = std::pair<std::int64_t, int>;

  void trace(std::int64_t slot, int id, std::string what) {
    if (cfg_.record_trace) report_.trace.push_back({slot, id, std::move(what)});
  }

  void schedule_next(int id) {
    Vehicle& v = vehicles_[id];
    if (v.next_interval >= plan_.intervals) return;
    const double u_off = uniform01(v.gen_rng);
    const double u_pri = uniform01(v.gen_rng);
    std::int64_t off = static_cast<std::int64_t>(u_off * static_cast<double>(plan_.cam_slots));
    if (v.offset_override >= 0) off = v.offset_override;
    const std::int64_t slot = v.next_interval * plan_.cam_slots + off;
    pending_prio_[id] = sample_priority(cfg_.mix, u_pri);
    events_.push({slot, id});
    ++v.next_interval;
  }

  void activate(int id) {
    auto it = std::lower_bound(active_.begin(), active_.end(), id);
    if (it == active_.end() || *it != id) active_.insert(it, id);
  }

  void begin_frame(int id, const Frame& f, std::int64_t t) {
    Vehicle& v = vehicles_[id];
    v.has_frame = true;
    v.frame = f;
    v.st = mac::MacState{};
    v.st.phase = mac::Phase::Sensing;
    v.chain_collided = false;
    ++report_.by_priority[index_of(f.prio)].generated;
    trace(t, id, std::string("gen:") + std::string(to_string(f.prio)));
    activate(id);
  }

  void end_frame(int id, std::int64_t t, bool delivered) {
    Vehicle& v = vehicles_[id];
    auto& c = report_.by_priority[index_of(v.frame.prio)];
    if (delivered) {
      ++c.delivered;
      trace(t, id, "delivered");
    } else if (v.frame.any_collision) {
      ++c.collided;
      trace(t, id, "collided");
    } else {
      ++c.expired;
      trace(t, id, "expired");
    }
    v.has_frame = false;
    v.st = mac::MacState{};
    if (v.queued) {
      Frame f = *v.queued;
      v.queued.reset();
      v.has_frame = true;
      v.frame = f;
      v.st.phase = mac::Phase::Sensing;
      v.chain_collided = false;
    }
  }

  void generate(int id, std::int64_t t) {
    Vehicle& v = vehicles_[id];
    Frame f;
    f.prio = pending_prio_[id];
    f.gen = t;
    f.expiry = t + plan_.cam_slots;
    if (v.has_frame && v.st.phase == mac::Phase::Transmitting) {
      if (v.queued) {
        ++report_.by_priority[index_of(v.queued->prio)].expired;
        trace(t, id, "expired");
      }
      v.queued = f;
      ++report_.by_priority[index_of(f.prio)].generated;
      trace(t, id, std::string("queue:") + std::string(to_string(f.prio)));
    } else {
      if (v.has_frame) end_frame(id, t, false);
      begin_frame(id, f, t);
    }
    schedule_next(id);
  }

  // A newer frame waiting behind the current one replaces it once the air is free.
  bool supersede(int id, std::int64_t t) {
    if (!vehicles_[id].queued) return false;
    end_frame(id, t, false);
    return true;
  }

  CollisionKind pair_kind(int s, int o) {
    const std::uint64_t key = (static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint32_t>(o);
    auto it = pair_cache_.find(key);
    if (it != pair_cache_.end()) return it->second;
    const CollisionKind k = classify_interference(vehicles_[s].x, vehicles_[o].x, sorted_,
                                                  cfg_.r_sens, cfg_.r_tx, cfg_.road_length,
                                                  cfg_.wraparound);
    pair_cache_.emplace(key, k);
    return k;
  }

  bool in_sensing_range(int a, int b) const {
    return road_distance(vehicles_[a].x, vehicles_[b].x, cfg_.road_length, cfg_.wraparound) <=
           cfg_.r_sens;
  }

  void start_attempt(int id, std::int64_t t) {
    Vehicle& v = vehicles_[id];
    v.attempt_air = 0;
    v.attempt_direct = false;
    v.attempt_hidden = false;
    ++report_.attempts;
    ++report_.by_priority[index_of(v.frame.prio)].attempts;
    if (v.frame.first_air < 0) {
      v.frame.first_air = t + 1;
      report_.waiting_slots += v.frame.first_air - v.frame.gen;
      ++report_.waited_frames;
    }
  }

  // Closes the current attempt; returns whether it collided.
  bool finish_attempt(int id, bool continues_chain) {
    Vehicle& v = vehicles_[id];
    const bool collided = v.attempt_direct || v.attempt_hidden;
    if (collided) {
      ++report_.collided_attempts;
      ++report_.by_priority[index_of(v.frame.prio)].collided_attempts;
      if (v.attempt_direct) {
        ++report_.direct_attempts;
      } else {
        ++report_.hidden_attempts;
      }
      report_.collided_air_slots += v.attempt_air;
      if (!v.chain_collided) ++report_.collision_events;
      v.frame.any_collision = true;
    }
    v.chain_collided = collided && continues_chain;
    return collided;
  }

  void step(std::int64_t t) {
    while (!events_.empty() && events_.top().first == t) {
      const int id = events_.top().second;
      events_.pop();
      generate(id, t);
    }

    transmitters_.clear();
    for (int id : active_) {
      if (vehicles_[id].has_frame && vehicles_[id].st.phase == mac::Phase::Transmitting) {
        transmitters_.push_back(id);
      }
    }
    for (int s : transmitters_) {
      Vehicle& v = vehicles_[s];
      v.direct_now = false;
      ++v.attempt_air;
      for (int o : transmitters_) {
        if (o == s) continue;
        const CollisionKind k = pair_kind(s, o);
        if (k == CollisionKind::Direct) {
          v.direct_now = true;
          v.attempt_direct = true;
        } else if (k == CollisionKind::Hidden) {
          v.attempt_hidden = true;
        }
      }
    }

    std::size_t i = 0;
    while (i < active_.size()) {
      const int id = active_[i];
      Vehicle& v = vehicles_[id];
      if (v.has_frame) process(id, t);
      if (v.has_frame && v.st.phase != mac::Phase::Transmitting && t + 1 >= v.frame.expiry) {
        end_frame(id, t, false);
      }
      if (!v.has_frame) {
        active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
  }

  void process(int id, std::int64_t t) {
    Vehicle& v = vehicles_[id];
    const Protocol kind = cfg_.protocol;
    phy::StatisticSampler* sampler = sampler_ ? &*sampler_ : nullptr;

    mac::Sensed sensed = mac::Sensed::None;
    switch (v.st.phase) {
      case mac::Phase::Sensing:
      case mac::Phase::Backoff: {
        bool other = false;
        for (int o : transmitters_) {
          if (o != id && in_sensing_range(id, o)) {
            other = true;
            break;
          }
        }
        sensed = sense_decision(other, false, cfg_, sampler, v.mac_rng);
        break;
      }
      case mac::Phase::Transmitting:
        if (mac::detector_active(kind, v.st, params_)) {
          sensed = sense_decision(v.direct_now, true, cfg_, sampler, v.mac_rng);
        }
        break;
      default: break;
    }

    const mac::MacAction action = mac::advance(kind, v.st, sensed, v.frame.prio, params_);
    int draw = 0;
    switch (action) {
      case mac::MacAction::StartTx:
        start_attempt(id, t);
        trace(t, id, "start_tx");
        break;
      case mac::MacAction::ContinueTx:
        if (v.st.elapsed + 1 == params_.tx_slots) {
          const bool collided = finish_attempt(id, false);
          end_frame(id, t, !collided);
          return;
        }
        break;
      case mac::MacAction::AbortTx:
        finish_attempt(id, false);
        trace(t, id, "abort_tx");
        if (cfg_.drop_on_first_collision) {
          v.frame.any_collision = true;
          end_frame(id, t, false);
          return;
        }
        if (supersede(id, t)) return;
        break;
      case mac::MacAction::ReattemptNextSlot:
        finish_attempt(id, true);
        if (supersede(id, t)) return;
        start_attempt(id, t);
        trace(t, id, "reattempt");
        break;
      case mac::MacAction::StartBackoff:
        draw = mac::draw_backoff(params_.w, v.mac_rng);
        trace(t, id, "backoff:" + std::to_string(draw));
        break;
      default: break;
    }
    v.st = mac::apply(v.st, action, draw, params_);
  }

  const SimConfig& cfg_;
  SlotPlan plan_;
  mac::MacParams params_;
  std::optional<phy::StatisticSampler> sampler_;
  std::vector<double> positions_;
  std::vector<double> sorted_;
  std::vector<Vehicle> vehicles_;
  std::vector<Priority> pending_prio_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::vector<int> active_;
  std::vector<int> transmitters_;
  std::unordered_map<std::uint64_t, CollisionKind> pair_cache_;
  SimReport report_;
};

}  // namespace

SimReport run(const SimConfig& cfg) {
  cfg.validate();
  Engine e(cfg);
  return e.run();
}

}  // namespace vanet::sim
