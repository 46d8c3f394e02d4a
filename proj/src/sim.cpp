#include "cmpcc/sim.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cmpcc/clf_cbf.hpp"
#include "cmpcc/corridor.hpp"

namespace cmpcc {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kCbfFixed: return "cbf_fixed";
    case Variant::kCbfSac: return "cbf_sac";
  }
  return "unknown";
}

std::optional<Variant> variant_from_string(const std::string& name) {
  if (name == "base") return Variant::kBase;
  if (name == "cbf_fixed") return Variant::kCbfFixed;
  if (name == "cbf_sac") return Variant::kCbfSac;
  return std::nullopt;
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kPlannerFailure: return "planner_failure";
    case Outcome::kTimeout: return "timeout";
  }
  return "unknown";
}

namespace {

uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<Vec2> sample_polyline(const PlanarCurve& curve, double step = 0.02) {
  const int n = std::max(2, static_cast<int>(std::ceil(curve.total_length() / step)));
  std::vector<Vec2> pts(n + 1);
  for (int i = 0; i <= n; ++i) pts[i] = curve.evaluate(curve.total_length() * i / n);
  return pts;
}

bool plan_still_valid(const PlanarCurve& curve, double xi_from, const Costmap& online,
                      double r_o) {
  const double step = 0.5 * online.resolution();
  for (double xi = xi_from; xi <= curve.total_length(); xi += step) {
    if (is_collision(online, curve.evaluate(xi), r_o)) return false;
  }
  return true;
}

}  // namespace

uint64_t episode_seed(uint64_t master_seed, int world_index, int trial) {
  return splitmix(master_seed ^ splitmix(0x77ULL + 1000003ULL * world_index + trial));
}

void jitter_start(uint64_t seed, double magnitude, Vec2* start, double* theta) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-magnitude, magnitude);
  std::uniform_real_distribution<double> ang(-0.2, 0.2);
  *start += Vec2(pos(rng), pos(rng));
  *theta += ang(rng);
}

EpisodeResult run_episode(const EpisodeConfig& config, const SacHooks* hooks) {
  const Config& p = config.params;
  const Costmap& truth = *config.world;
  const bool with_cbf = config.variant != Variant::kBase;
  const bool with_sac = config.variant == Variant::kCbfSac;

  Costmap online(truth.resolution(), truth.origin(), truth.width(), truth.height(), 0.0);
  MpccConfig mpcc_cfg = p.mpcc_config();
  const ClfParams clf = p.clf_params();
  CbfParams cbf = p.cbf_params();
  const double r_o = p.robot_radius;
  const double dt = mpcc_cfg.dt;

  EpisodeResult result;
  AugmentedState state;
  state.x = config.start.x();
  state.y = config.start.y();
  state.theta = wrap_angle(config.start_theta);

  std::optional<PlanarCurve> curve;
  std::optional<Corridor> corridor;
  std::vector<ControlInput> warm;
  int last_z = 0;

  // Pending transition pieces for the policy hooks.
  bool have_prev = false;
  SacObservation prev_obs;
  SacAction prev_action;
  const RewardWeights reward_w = p.reward_weights();

  auto make_obs = [&](const AugmentedState& s) {
    SacObservation obs;
    obs.theta = s.theta;
    obs.v = s.v;
    obs.nu = s.nu;
    if (corridor && curve) {
      obs.d_upper = corridor->upper(s.xi_hat);
      obs.d_lower = corridor->lower(s.xi_hat);
      const CbfPair h = cbf_pair(s, *curve, *corridor, cbf);
      obs.h_upper = h.upper;
      obs.h_lower = h.lower;
    }
    obs.alpha_upper = cbf.alpha_upper;
    obs.alpha_lower = cbf.alpha_lower;
    obs.z_flag = last_z;
    return obs;
  };

  auto finish = [&](Outcome outcome) {
    result.outcome = outcome;
    if (hooks && hooks->on_transition && have_prev) {
      const double done =
          (outcome == Outcome::kCollision || outcome == Outcome::kSuccess ||
           outcome == Outcome::kPlannerFailure)
              ? 1.0
              : 0.0;
      const SacObservation last_obs = make_obs(state);
      Transition t;
      t.s = prev_obs.to_vector();
      t.a = prev_action.to_vector();
      t.s_next = last_obs.to_vector();
      t.r = sac_reward(prev_obs, prev_action, last_obs, reward_w, mpcc_cfg.nu_max,
                       cbf.alpha_min, cbf.alpha_max);
      t.done = done;
      hooks->on_transition(t);
    }
    if (curve) result.reference_polyline = sample_polyline(*curve);
    return result;
  };

  for (int step = 0;; ++step) {
    result.executed_path.push_back(state.position());
    if (is_collision(truth, state.position(), r_o)) return finish(Outcome::kCollision);
    if ((state.position() - config.goal).norm() < p.goal_tolerance) {
      return finish(Outcome::kSuccess);
    }
    if (step >= config.max_steps || step * dt >= p.sim_timeout) {
      return finish(Outcome::kTimeout);
    }

    // Sense.
    const RangeScan scan =
        simulate_scan(truth, state.position(), state.theta, p.sensor_beams, p.sensor_range);
    integrate_scan(online, scan);

    // Replan when due.
    const bool need_plan = !curve || state.xi_hat >= p.replan_progress ||
                           !plan_still_valid(*curve, state.xi_hat, online, r_o);
    if (need_plan) {
      auto planned = plan(online, state.position(), config.goal, p.planner_s_max, r_o);
      if (!planned) return finish(Outcome::kPlannerFailure);
      curve = std::move(*planned);
      state.xi_hat = closest_point_param(*curve, state.position(), 0.02);
      warm.clear();
      result.reference_polyline = sample_polyline(*curve);
    }
    const double s_r = curve->total_length();

    // Corridor for the barrier-constrained variants.
    if (with_cbf) {
      const double kappa = std::max(p.corridor_kappa_plus, curve->max_curvature());
      const double dxi = sampling_step(p.world_resolution, p.corridor_d_plus, kappa);
      double xi0 = state.xi_hat;
      double xi1 = std::min(xi0 + p.corridor_s_plus, s_r);
      if (xi1 - xi0 < std::max(8.0 * dxi, 0.05)) {
        xi0 = std::max(0.0, xi1 - std::max(8.0 * dxi, 0.05));
      }
      const OffsetSamples samples =
          sample_offsets(*curve, online, xi0, xi1, dxi, p.corridor_d_plus);
      Corridor fitted = fit_corridor(samples, p.corridor_degree);
      if (check_self_intersection(*curve, fitted).any()) {
        fitted = shrink_to_regular(*curve, fitted);
      }
      corridor = std::move(fitted);
      auto [up, lo] = offset_curves(*curve, *corridor);
      result.corridor_upper_polyline.clear();
      result.corridor_lower_polyline.clear();
      const int pn = 120;
      for (int i = 0; i <= pn; ++i) {
        const double xi = xi0 + (xi1 - xi0) * i / pn;
        result.corridor_upper_polyline.push_back(up(xi));
        result.corridor_lower_polyline.push_back(lo(xi));
      }
    }

    // Policy adjustment between solves.
    SacObservation obs;
    SacAction action;
    if (with_sac && hooks && hooks->act) {
      obs = make_obs(state);
      if (have_prev && hooks->on_transition) {
        Transition t;
        t.s = prev_obs.to_vector();
        t.a = prev_action.to_vector();
        t.s_next = obs.to_vector();
        t.r = sac_reward(prev_obs, prev_action, obs, reward_w, mpcc_cfg.nu_max, cbf.alpha_min,
                         cbf.alpha_max);
        t.done = 0.0;
        hooks->on_transition(t);
      }
      action = hooks->act(obs);
      std::tie(cbf.alpha_upper, cbf.alpha_lower) = apply_action(
          cbf.alpha_upper, cbf.alpha_lower, action, cbf.alpha_min, cbf.alpha_max);
      prev_obs = obs;
      prev_action = action;
      have_prev = true;
    }

    // Contouring solve.
    const MpccSolution sol = solve(mpcc_cfg, state, *curve, with_cbf ? &*corridor : nullptr,
                                   clf, cbf, warm.empty() ? nullptr : &warm);
    ++result.solver_calls;
    result.total_solve_time += sol.solve_time;
    ControlInput input;
    if (sol.status == MpccStatus::kInfeasible) {
      input = fallback_control(state, mpcc_cfg.a_max);
    } else {
      input = sol.inputs.front();
      warm = shift_warm_start(sol);
    }
    last_z = sol.status == MpccStatus::kOptimal ? 0 : 1;

    // Log.
    StepRecord rec;
    rec.step = step;
    rec.t = step * dt;
    rec.state = state;
    rec.input = input;
    if (with_cbf && corridor) {
      const CbfPair h = cbf_pair(state, *curve, *corridor, cbf);
      rec.h_up = h.upper;
      rec.h_lo = h.lower;
      rec.alpha_up = cbf.alpha_upper;
      rec.alpha_lo = cbf.alpha_lower;
    }
    rec.slack = sol.slack;
    rec.z = last_z;
    rec.status = sol.status;
    rec.solve_ms = sol.solve_time * 1e3;
    rec.sqp_iters = sol.sqp_iterations;
    const ContourErrors errs = contour_lag_errors(state.position(), state.xi_hat, *curve);
    rec.contour_err = errs.contour;
    rec.lag_err = errs.lag;
    result.steps.push_back(rec);

    // Plant step (same integrator as the controller model).
    StateBounds bounds{mpcc_cfg.v_min, mpcc_cfg.v_max, mpcc_cfg.nu_max, s_r};
    state = dynamics_discrete_clamped(state, input, dt, bounds, nullptr);
  }
}

int BenchmarkSummary::successes(Variant v) const {
  int n = 0;
  for (const BenchmarkEntry& e : rows) {
    if (e.variant == v && e.outcome == Outcome::kSuccess) ++n;
  }
  return n;
}

int BenchmarkSummary::count(Variant v) const {
  int n = 0;
  for (const BenchmarkEntry& e : rows) {
    if (e.variant == v) ++n;
  }
  return n;
}

double BenchmarkSummary::success_rate(Variant v) const {
  const int n = count(v);
  return n > 0 ? static_cast<double>(successes(v)) / n : 0.0;
}

BenchmarkSummary benchmark(const std::vector<Costmap>& worlds,
                           const std::vector<Variant>& variants, int trials,
                           const Config& params, uint64_t master_seed, SacAgent* policy,
                           int jobs, const std::string& trace_dir) {
  struct Job {
    Variant variant;
    int world_index;
    int trial;
  };
  std::vector<Job> jobs_list;
  for (const Variant v : variants) {
    for (int w = 0; w < static_cast<int>(worlds.size()); ++w) {
      for (int t = 0; t < trials; ++t) jobs_list.push_back({v, w, t});
    }
  }

  BenchmarkSummary summary;
  summary.rows.resize(jobs_list.size());
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs_list.size()) break;
      const Job& job = jobs_list[i];
      const Costmap& world = worlds[job.world_index];

      EpisodeConfig ec;
      ec.world = &world;
      ec.params = params;
      ec.variant = job.variant;
      ec.goal = world_goal(world);
      ec.start = world_start(world);
      ec.start_theta = 0.0;
      ec.max_steps = static_cast<int>(params.sim_timeout / params.mpcc_dt);
      const uint64_t seed = episode_seed(master_seed, job.world_index, job.trial);
      jitter_start(seed, params.start_jitter, &ec.start, &ec.start_theta);

      SacHooks hooks;
      const SacHooks* hooks_ptr = nullptr;
      if (job.variant == Variant::kCbfSac && policy) {
        hooks.act = [policy](const SacObservation& obs) {
          return policy->act_deterministic(obs);
        };
        hooks_ptr = &hooks;
      }
      const EpisodeResult r = run_episode(ec, hooks_ptr);

      BenchmarkEntry entry;
      entry.variant = job.variant;
      entry.world_index = job.world_index;
      entry.world_seed = world.seed();
      entry.trial = job.trial;
      entry.outcome = r.outcome;
      entry.steps = static_cast<int>(r.steps.size());
      entry.mean_solve_ms =
          r.solver_calls > 0 ? 1e3 * r.total_solve_time / r.solver_calls : 0.0;
      summary.rows[i] = entry;

      if (!trace_dir.empty()) {
        std::ostringstream name;
        name << trace_dir << "/trace_" << to_string(job.variant) << "_w" << job.world_index
             << "_t" << job.trial << ".csv";
        emit_trace(r, name.str());
      }
    }
  };

  const int thread_count = std::max(1, jobs);
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return summary;
}

void emit_trace(const EpisodeResult& result, std::ostream& out) {
  out << "step,t,x,y,theta,v,xi_hat,nu,a,omega,nudot,h_up,h_lo,alpha_up,alpha_lo,delta,Z,"
         "status\n";
  char buf[512];
  for (const StepRecord& r : result.steps) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,"
                  "%.12g,%.12g,%.12g,%d,%s\n",
                  r.step, r.t, r.state.x, r.state.y, r.state.theta, r.state.v, r.state.xi_hat,
                  r.state.nu, r.input.a, r.input.omega, r.input.nudot, r.h_up, r.h_lo,
                  r.alpha_up, r.alpha_lo, r.slack, r.z, to_string(r.status));
    out << buf;
  }
}

void emit_trace(const EpisodeResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_trace: cannot open " + path);
  emit_trace(result, out);
}

void emit_summary_csv(const BenchmarkSummary& summary, const std::vector<Costmap>& worlds,
                      const std::string& path) {
  (void)worlds;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_summary_csv: cannot open " + path);
  out << "variant,world,trial,outcome,steps,mean_solve_ms\n";
  char buf[256];
  for (const BenchmarkEntry& e : summary.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%llu,%d,%s,%d,%.3f\n", to_string(e.variant),
                  static_cast<unsigned long long>(e.world_seed), e.trial, to_string(e.outcome),
                  e.steps, e.mean_solve_ms);
    out << buf;
  }
}

namespace {

struct SvgMapper {
  double scale, ox, oy, height_px;
  double x(double wx) const { return (wx - ox) * scale; }
  double y(double wy) const { return height_px - (wy - oy) * scale; }
};

void svg_polyline(std::ostream& out, const SvgMapper& m, const std::vector<Vec2>& pts,
                  const char* color, double width) {
  if (pts.size() < 2) return;
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
      << "\" points=\"";
  for (const Vec2& p : pts) out << m.x(p.x()) << "," << m.y(p.y()) << " ";
  out << "\"/>\n";
}

}  // namespace

void emit_plot(const EpisodeResult& result, const Costmap& world, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_plot: cannot open " + path);

  const double scale = 60.0;
  const double map_w = world.width() * world.resolution() * scale;
  const double map_h = world.height() * world.resolution() * scale;
  const double strip_h = 180.0;
  const double total_h = map_h + 2.0 * strip_h + 40.0;
  SvgMapper m{scale, world.origin().x(), world.origin().y(), map_h};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << map_w << "\" height=\""
      << total_h << "\">\n";
  out << "<rect width=\"" << map_w << "\" height=\"" << map_h << "\" fill=\"white\"/>\n";
  for (int iy = 0; iy < world.height(); ++iy) {
    for (int ix = 0; ix < world.width(); ++ix) {
      if (!world.occupied(ix, iy)) continue;
      const Vec2 c = world.grid_to_world_center({ix, iy});
      const double r = world.resolution();
      out << "<rect x=\"" << m.x(c.x() - 0.5 * r) << "\" y=\"" << m.y(c.y() + 0.5 * r)
          << "\" width=\"" << r * scale << "\" height=\"" << r * scale << "\" fill=\"#222\"/>\n";
    }
  }
  svg_polyline(out, m, result.reference_polyline, "#1f77b4", 2.0);
  svg_polyline(out, m, result.corridor_upper_polyline, "#d62728", 1.5);
  svg_polyline(out, m, result.corridor_lower_polyline, "#ff7f0e", 1.5);
  svg_polyline(out, m, result.executed_path, "#2ca02c", 2.5);

  // Time-series strips: barrier values, then alpha values.
  auto strip = [&](double y0, auto value_a, auto value_b, const char* ca, const char* cb,
                   const char* label) {
    const int n = static_cast<int>(result.steps.size());
    if (n < 2) return;
    double lo = 1e9, hi = -1e9;
    for (const StepRecord& r : result.steps) {
      lo = std::min({lo, value_a(r), value_b(r)});
      hi = std::max({hi, value_a(r), value_b(r)});
    }
    if (hi - lo < 1e-9) hi = lo + 1.0;
    auto ym = [&](double v) { return y0 + strip_h - 20.0 - (v - lo) / (hi - lo) * (strip_h - 40.0); };
    out << "<line x1=\"0\" y1=\"" << ym(0.0) << "\" x2=\"" << map_w << "\" y2=\"" << ym(0.0)
        << "\" stroke=\"#bbb\"/>\n";
    for (int series = 0; series < 2; ++series) {
      out << "<polyline fill=\"none\" stroke=\"" << (series == 0 ? ca : cb)
          << "\" stroke-width=\"1.5\" points=\"";
      for (int i = 0; i < n; ++i) {
        const double v = series == 0 ? value_a(result.steps[i]) : value_b(result.steps[i]);
        out << (map_w * i / (n - 1)) << "," << ym(v) << " ";
      }
      out << "\"/>\n";
    }
    out << "<text x=\"8\" y=\"" << y0 + 16.0 << "\" font-size=\"13\">" << label << "</text>\n";
  };
  strip(map_h + 20.0, [](const StepRecord& r) { return r.h_up; },
        [](const StepRecord& r) { return r.h_lo; }, "#d62728", "#ff7f0e",
        "barrier values h_up (red), h_lo (orange)");
  strip(map_h + strip_h + 30.0, [](const StepRecord& r) { return r.alpha_up; },
        [](const StepRecord& r) { return r.alpha_lo; }, "#9467bd", "#8c564b",
        "alpha_up (purple), alpha_lo (brown)");
  out << "</svg>\n";
}

}  // namespace cmpcc
