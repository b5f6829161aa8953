#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "vanet/analytical_model.hpp"

using namespace vanet;
using namespace vanet::model;

namespace {

TopologyParams at_density(double veh_per_km) {
  TopologyParams t;
  t.beta = veh_per_km / 1000.0;
  return t;
}

SteadyState manual_state(Protocol p, double p_idle, double t_bo, int n = 10) {
  SteadyState s;
  s.protocol = p;
  s.n = n;
  s.p_idle = p_idle;
  s.t_bo = t_bo;
  s.p_r = 0.05;
  s.p_sigma = 0.5;
  return s;
}

constexpr Protocol kAll[] = {Protocol::HdEdca, Protocol::FdEdca, Protocol::Pbma};

}  // namespace

TEST_CASE("throughput examples") {
  MacTimings tm;
  CHECK(throughput(50, tm.t_cam, 0.2, tm) == 0.0);
  CHECK(throughput(50, 0.0, 0.0, tm) == 50.0);
  CHECK(throughput(50, 1e-3, 0.2, tm) == doctest::Approx(39.6));
  CHECK_THROWS_AS(throughput(50, 0.2, 0.0, tm), std::domain_error);
}

TEST_CASE("idle probability") {
  MacTimings tm;
  const double a = (tm.t_cam - tm.t_pkt) / tm.t_cam;
  CHECK(idle_probability(20, 0.0, tm.t_pkt, tm.t_cam, IdleMode::Binomial) ==
        doctest::Approx(std::pow(a, 20)).epsilon(1e-12));
  // binomial mixture sums a and b only
  const double tb = 2e-3;
  const double v = idle_probability(7, tb, tm.t_pkt, tm.t_cam, IdleMode::Binomial);
  const double aa = (tm.t_cam - tb - tm.t_pkt) / tm.t_cam, bb = tb / tm.t_cam;
  CHECK(v == doctest::Approx(std::pow(aa + bb, 7)).epsilon(1e-12));
  double lit = 0;
  for (int i = 0; i <= 7; ++i) lit += std::pow(aa, i) * std::pow(bb, 7 - i);
  CHECK(idle_probability(7, tb, tm.t_pkt, tm.t_cam, IdleMode::PaperLiteral) ==
        doctest::Approx(lit).epsilon(1e-12));
}

TEST_CASE("simultaneous start") {
  SteadyState s;
  s.p_r = 0.2;
  s.p_sigma = 0.5;
  CHECK(s.ps(1) == 0.0);
  CHECK(s.ps(3) == doctest::Approx(1 - 0.9 * 0.9));
}

TEST_CASE("case polynomials") {
  const auto one = case_duration_factors(1.0);
  CHECK(one[0] == doctest::Approx(1.0));
  CHECK(one[1] == doctest::Approx(3.0));
  CHECK(one[3] == doctest::Approx(3.0));
  for (double pd = 0.0; pd <= 1.0; pd += 0.05) {
    const auto c = case_duration_factors(pd);
    for (double v : c) {
      CHECK(v >= -1e-12);
      CHECK(v <= 5.0);
    }
  }
  CHECK(case_duration_factors(0.0)[0] == 0.0);
}

TEST_CASE("steady state at the reference point") {
  MacTimings tm;
  CHECK(tm.t_pkt == doctest::Approx(466.6667e-6).epsilon(1e-6));
  for (Protocol p : kAll) {
    const auto s = solve_steady_state(p, at_density(100), tm, {}, {}, {});
    CAPTURE(to_string(p));
    CHECK(s.p_idle > 0.0);
    CHECK(s.p_idle < 1.0);
    CHECK(s.residual < 1e-10);
    CHECK(s.n == 50);

    const auto again = fixed_point_map(s, at_density(100), tm, {}, {}, {});
    CHECK(std::abs(again.p_idle - s.p_idle) < 1e-9);
    CHECK(std::abs(again.p_r - s.p_r) < 1e-9);
    CHECK(std::abs(again.p_sigma - s.p_sigma) < 1e-9);
    CHECK(std::abs(again.t_bo - s.t_bo) < 1e-9);
    CHECK(std::abs(again.ps_agg - s.ps_agg) < 1e-9);

    ModelOptions slow;
    slow.damping = 0.2;
    const auto other = solve_steady_state(p, at_density(100), tm, {}, {}, slow);
    CHECK(std::abs(other.p_idle - s.p_idle) < 1e-8);
    CHECK(std::abs(other.p_r - s.p_r) < 1e-8);
  }
}

TEST_CASE("solver reports non-convergence") {
  ModelOptions o;
  o.max_iterations = 2;
  CHECK_THROWS_AS(solve_steady_state(Protocol::FdEdca, at_density(150), {}, {}, {}, o), SolverError);
  try {
    solve_steady_state(Protocol::FdEdca, at_density(150), {}, {}, {}, o);
  } catch (const SolverError& e) {
    CHECK(e.residual() > 0.0);
  }
}

TEST_CASE("cross-check against an independent prototype") {
  // Values from a separate scripting implementation of the same model.
  struct Ref {
    double beta;
    Protocol p;
    double p_idle, p_c, c_d_us, t_w_us, sr;
  };
  const Ref refs[] = {
      {50, Protocol::HdEdca, 0.8896, 0.2212, 103.23, 26.26, 19.465},
      {50, Protocol::FdEdca, 0.9043, 0.1982, 31.43, 38.49, 20.038},
      {50, Protocol::Pbma, 0.8992, 0.1537, 31.92, 40.83, 21.149},
      {150, Protocol::HdEdca, 0.7041, 0.5334, 248.91, 56.49, 34.978},
      {150, Protocol::FdEdca, 0.7669, 0.3981, 95.40, 78.89, 45.108},
      {150, Protocol::Pbma, 0.7419, 0.3305, 99.76, 89.22, 50.169},
  };
  for (const Ref& r : refs) {
    const auto m = evaluate(r.p, at_density(r.beta), {}, {}, {}, {});
    CAPTURE(r.beta);
    CAPTURE(to_string(r.p));
    CHECK(std::abs(m.state.p_idle - r.p_idle) < 1e-4);
    CHECK(std::abs(m.p_c - r.p_c) < 1e-4);
    CHECK(std::abs(m.c_d * 1e6 - r.c_d_us) < 1e-2);
    CHECK(std::abs(m.t_w * 1e6 - r.t_w_us) < 1e-2);
    CHECK(std::abs(m.sr - r.sr) < 1e-3);
  }
}

TEST_CASE("collision probability edge cases") {
  MacTimings tm;
  TopologyParams lone = at_density(2);  // one contender
  lone.n_hc_override = 1.0;
  DetectionProfile perfect{1.0, 0.0};
  for (Protocol p : kAll) {
    const auto s = solve_steady_state(p, lone, tm, perfect, {}, {});
    CHECK(s.n == 1);
    const auto c = collision_probability(s, lone, tm, perfect, {}, {});
    CHECK(c.p_c == 0.0);
  }
  for (Protocol p : kAll) {
    const auto s = solve_steady_state(p, at_density(100), tm, perfect, {}, {});
    const auto c = collision_probability(s, at_density(100), tm, perfect, {}, {});
    if (p == Protocol::Pbma) CHECK(c.p_dc1 == 0.0); else CHECK(c.p_dc2 == 0.0);
  }
  CHECK(hidden_collision(0.0, at_density(0), tm) == 0.0);
  TopologyParams t = at_density(100);
  CHECK(t.n_hc() == doctest::Approx(15.0));
  CHECK(hidden_collision(0.2, t, tm) ==
        doctest::Approx(2 * 14.0 / tm.t_cam * (tm.t_aifs + tm.t_pkt) * 0.9));
}

TEST_CASE("clamping is flagged") {
  TopologyParams t = at_density(100);
  t.n_hc_override = 200.0;
  const auto s = solve_steady_state(Protocol::HdEdca, t, {}, {}, {}, {});
  const auto c = collision_probability(s, t, {}, {}, {}, {});
  CHECK(c.clamped);
  CHECK(c.p_c <= 1.0);
  CHECK(c.p_hc <= 1.0);
}

TEST_CASE("reduction of PBMA to FD with only normal messages") {
  PriorityMix normal{1.0, 0.0, 0.0};
  for (double b : {25.0, 50.0, 100.0, 150.0, 200.0}) {
    for (int w : {8, 16, 32}) {
      ModelOptions o;
      o.w = w;
      const auto fd = evaluate(Protocol::FdEdca, at_density(b), {}, {}, normal, o);
      const auto pb = evaluate(Protocol::Pbma, at_density(b), {}, {}, normal, o);
      CAPTURE(b);
      CAPTURE(w);
      CHECK(std::abs(fd.state.p_idle - pb.state.p_idle) <= 1e-12);
      CHECK(std::abs(fd.collision.p_dc1 - pb.collision.p_dc4) <= 1e-12);
      CHECK(std::abs(fd.collision.p_dc2 - pb.collision.p_dc1) <= 1e-12);
      CHECK(pb.collision.p_dc2 == 0.0);
      CHECK(pb.collision.p_dc3 == 0.0);
      CHECK(std::abs(fd.p_c - pb.p_c) <= 1e-12);
      CHECK(std::abs(fd.duration.cases[0] - pb.duration.cases[0]) <= 1e-12);
      CHECK(std::abs(fd.c_d - pb.c_d) <= 1e-12);
      CHECK(std::abs(fd.t_w - pb.t_w) <= 1e-12);
      CHECK(std::abs(fd.sr - pb.sr) <= 1e-12);
      CHECK_FALSE(pb.critical->present);
    }
  }
}

TEST_CASE("collision duration") {
  MacTimings tm;
  CollisionBreakdown none;
  CHECK(collision_duration(Protocol::HdEdca, none, {}, {}, tm).total == 0.0);
  CollisionBreakdown pc;
  pc.p_dc = 0.2;
  pc.p_hc = 0.05;
  pc.p_c = 0.2 + 0.05 - 0.01;
  CHECK(collision_duration(Protocol::HdEdca, pc, {}, {}, tm).total == doctest::Approx(pc.p_c * tm.t_pkt));
  CHECK(collision_duration(Protocol::FdEdca, pc, {1.0, 0.0}, {}, tm).total ==
        doctest::Approx(0.2 * tm.t_h + 0.05 * tm.t_pkt));
  for (double b : {25.0, 100.0, 200.0}) {
    for (Protocol p : kAll) {
      const auto m = evaluate(p, at_density(b), tm, {}, {}, {});
      CHECK(m.c_d >= 0.0);
      CHECK(m.c_d <= tm.t_pkt);
    }
  }
}

TEST_CASE("waiting time examples") {
  MacTimings tm;
  DetectionProfile d{0.9, 0.0};
  CHECK(waiting_time(manual_state(Protocol::HdEdca, 1.0, 1e-4), d, {}, tm).total ==
        doctest::Approx(tm.t_h));
  CHECK(waiting_time(manual_state(Protocol::FdEdca, 1.0, 1e-4), d, {}, tm).total ==
        doctest::Approx(tm.t_h));
  const auto fd = waiting_time(manual_state(Protocol::FdEdca, 0.7, 1e-4), DetectionProfile{}, {}, tm);
  const auto pb = waiting_time(manual_state(Protocol::Pbma, 0.7, 1e-4), DetectionProfile{}, {1, 0, 0}, tm);
  CHECK(fd.total == pb.total);
  CHECK(fd.terms.size() == 4);
  CHECK_THROWS_AS(waiting_time(manual_state(Protocol::FdEdca, 0.7, 1e-4), d, {}, tm, 0), std::domain_error);
}

TEST_CASE("waiting series against long sums") {
  MacTimings tm;
  DetectionProfile det;
  const double p = 0.75, tb = 3e-4;
  const auto fd = waiting_time(manual_state(Protocol::FdEdca, p, tb), det, {}, tm, 20);
  double tw2 = 0, tw3 = 0, tw4 = 0;
  const double x = (1 - p) * det.pd;
  for (int k = 1; k < 5000; ++k) {
    tw2 += std::pow(x, k) * k * (tm.t_h + tb);
    tw3 += p * det.pf * std::pow(x, k - 1) * k * (tm.t_h + tb);
    tw4 += std::pow(1 - p, k + 1) * det.pm() * std::pow(det.pd, k) * ((k + 1) * tm.t_h + k * tb);
  }
  const double oracle = p * (1 - det.pf) * tm.t_h + tw2 + tw3 + tw4;
  CHECK(std::abs(fd.total - oracle) < 1e-9 * tm.t_cam);
}

TEST_CASE("series tail bound at default truncation") {
  for (double b : {25.0, 50.0, 100.0, 150.0, 200.0}) {
    for (int w : {8, 16, 32}) {
      ModelOptions o;
      o.w = w;
      for (Protocol p : {Protocol::FdEdca, Protocol::Pbma}) {
        const auto m = evaluate(p, at_density(b), {}, {}, {}, o);
        for (const auto& s : m.waiting.series) {
          CAPTURE(b);
          CAPTURE(w);
          REQUIRE(s.ratio < 1.0);
          const double bound = s.first_omitted / (1.0 - s.ratio);
          CHECK(bound < 1e-9 * MacTimings{}.t_cam);
        }
      }
    }
  }
}

TEST_CASE("critical message metrics") {
  MacTimings tm;
  DetectionProfile perfect{1.0, 0.0};
  PriorityMix mix;
  const TopologyParams t = at_density(100);
  const auto s = solve_steady_state(Protocol::Pbma, t, tm, perfect, mix, {});
  const auto pc = collision_probability(s, t, tm, perfect, mix, {});
  const auto cm = critical_message_metrics(s, t, tm, perfect, mix, {});
  CHECK(cm.present);
  CHECK(cm.p_c_weighted == doctest::Approx(mix.p_gc * s.p_idle * s.ps(s.n) + pc.p_hc));
  CHECK(cm.t_w_weighted == doctest::Approx(mix.p_gc * cm.t_w_conditional));
  CHECK(cm.c_d <= tm.t_pkt);

  const auto none = critical_message_metrics(s, t, tm, perfect, {0.95, 0.05, 0.0}, {});
  CHECK_FALSE(none.present);
  CHECK(none.t_w_weighted == 0.0);
}

TEST_CASE("hidden correction switch") {
  ModelOptions o;
  o.fd_hidden_uses_hd_direct = true;
  const TopologyParams t = at_density(100);
  const auto hd = evaluate(Protocol::HdEdca, t, {}, {}, {}, {});
  const auto fd = evaluate(Protocol::FdEdca, t, {}, {}, {}, o);
  CHECK(fd.p_hc == doctest::Approx(hidden_collision(hd.p_dc, t, {})));
}

TEST_CASE("validation") {
  TopologyParams t;
  t.r_sens = 150;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  MacTimings tm;
  tm.t_pkt = 0.2;
  CHECK_THROWS_AS(tm.validate(), ConfigError);
  CHECK_THROWS_AS((PriorityMix{0.5, 0.2, 0.2}.validate()), ConfigError);
  CHECK_THROWS_AS((DetectionProfile{1.2, 0.0}.validate()), ConfigError);
}
