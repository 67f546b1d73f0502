#include "mra/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <thread>

#include "mra/benchmarks.hpp"
#include "mra/parallel.hpp"

namespace mra {

const char* to_string(Method m) { return m == Method::accpm ? "accpm" : "subgradient"; }

Method method_from_string(const std::string& s) {
  if (s == "accpm") return Method::accpm;
  if (s == "subgradient") return Method::subgradient;
  throw ConfigError("unknown method '" + s + "' (expected subgradient or accpm)");
}

const char* to_string(TrackedPoint p) {
  switch (p) {
    case TrackedPoint::raw: return "raw";
    case TrackedPoint::mra: return "mra";
    case TrackedPoint::avg: return "avg";
    case TrackedPoint::proj: return "proj";
    case TrackedPoint::dualavg: return "dualavg";
  }
  return "?";
}

// -- config -----------------------------------------------------------------

namespace {

// Strict view of one JSON object: every read key is remembered so leftovers
// can be reported.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  const nlohmann::json& raw(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError(where_ + ": missing field '" + key + "'");
    used_.insert(key);
    return *it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key) {
    const nlohmann::json& v = raw(key);
    if (!v.is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  int integer(const std::string& key) {
    const nlohmann::json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
    return v.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& key) {
    const nlohmann::json& v = raw(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(where_ + "." + key + ": expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key) {
    const nlohmann::json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where_ + "." + key + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const nlohmann::json& v = raw(key);
    if (!v.is_string()) throw ConfigError(where_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  std::string sub(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(where_ + ": unknown field '" + key + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

template <typename F>
auto translate(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (instance.file.empty() == instance.generator.empty()) {
    throw ConfigError("instance: give exactly one of file or generator");
  }
  if (max_iterations < 0) throw ConfigError("max_iterations must be nonnegative");
  if (recovery_every < 1) throw ConfigError("recovery.every must be at least 1");
  if (!(feasibility_threshold > 0.0)) throw ConfigError("feasibility_threshold must be positive");
  if (infeasibility_scale < 0.0) throw ConfigError("infeasibility_scale must be nonnegative");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  if (recovery.samples < 1) throw ConfigError("recovery.samples must be at least 1");
  if (sweep_steps && method != Method::subgradient) {
    throw ConfigError("sweep_steps needs method subgradient");
  }
  if (stopping.accpm_tol < 0.0 || stopping.subgrad_tol < 0.0 || stopping.eps_r < 0.0) {
    throw ConfigError("stopping tolerances must be nonnegative");
  }
  if (stopping.subgrad_patience < 1) throw ConfigError("stopping.subgrad_patience must be >= 1");
  translate([&] {
    oracle.validate();
    return 0;
  });
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  Fields top(j, "config");

  {
    Fields f(top.raw("instance"), top.sub("instance"));
    if (f.has("file")) {
      cfg.instance.file = f.string("file");
    } else {
      cfg.instance.generator = f.string("generator");
      cfg.instance.seed = f.unsigned_integer("seed");
      cfg.instance.params = f.raw("params");
      if (!cfg.instance.params.is_object()) {
        throw ConfigError("config.instance.params: expected an object");
      }
    }
    f.finish();
  }

  cfg.method = method_from_string(top.string("method"));
  cfg.step_rule = translate([&] { return step_rule_from_string(top.string("step_rule")); });
  cfg.sweep_steps = top.boolean("sweep_steps");

  {
    Fields f(top.raw("oracle"), top.sub("oracle"));
    cfg.oracle.kind = translate([&] { return oracle_kind_from_string(f.string("kind")); });
    cfg.oracle.eps = f.number("eps");
    cfg.oracle.responses = f.integer("N");
    const nlohmann::json& mixing = f.raw("mixing");
    if (!mixing.is_array()) throw ConfigError("config.oracle.mixing: expected an array");
    for (std::size_t g = 0; g < mixing.size(); ++g) {
      Fields e(mixing[g], "config.oracle.mixing[" + std::to_string(g) + "]");
      const double eps = e.number("eps");
      const int count = e.integer("count");
      e.finish();
      cfg.oracle.mixing.emplace_back(eps, count);
    }
    cfg.oracle.history = f.integer("history");
    cfg.oracle.abs_floor = f.number("abs_floor");
    f.finish();
  }

  {
    Fields f(top.raw("recovery"), top.sub("recovery"));
    cfg.recovery.objective =
        translate([&] { return recovery_objective_from_string(f.string("objective")); });
    cfg.recovery.selection = translate([&] { return selection_from_string(f.string("selection")); });
    cfg.recovery.samples = f.integer("samples");
    cfg.recovery_every = f.integer("every");
    f.finish();
  }

  cfg.max_iterations = top.integer("max_iterations");
  cfg.feasibility_threshold = top.number("feasibility_threshold");
  {
    const nlohmann::json& s = top.raw("infeasibility_scale");
    if (s.is_null()) {
      cfg.infeasibility_scale = 0.0;
    } else if (s.is_number()) {
      cfg.infeasibility_scale = s.get<double>();
    } else {
      throw ConfigError("config.infeasibility_scale: expected a number or null");
    }
  }
  cfg.track_dual_average = top.boolean("track_dual_average");
  cfg.output = top.string("output");
  cfg.seed = top.unsigned_integer("seed");
  cfg.threads = top.integer("threads");

  {
    Fields f(top.raw("stopping"), top.sub("stopping"));
    cfg.stopping.accpm_tol = f.number("accpm_tol");
    cfg.stopping.subgrad_patience = f.integer("subgrad_patience");
    cfg.stopping.subgrad_tol = f.number("subgrad_tol");
    cfg.stopping.eps_r = f.number("eps_r");
    f.finish();
  }
  top.finish();

  cfg.oracle.seed = cfg.seed;
  cfg.recovery.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  if (!cfg.instance.file.empty()) {
    j["instance"] = {{"file", cfg.instance.file}};
  } else {
    j["instance"] = {{"generator", cfg.instance.generator},
                     {"seed", cfg.instance.seed},
                     {"params", cfg.instance.params}};
  }
  j["method"] = to_string(cfg.method);
  j["step_rule"] = to_string(cfg.step_rule);
  j["sweep_steps"] = cfg.sweep_steps;
  nlohmann::json mixing = nlohmann::json::array();
  for (const auto& [eps, count] : cfg.oracle.mixing) mixing.push_back({{"eps", eps}, {"count", count}});
  j["oracle"] = {{"kind", to_string(cfg.oracle.kind)}, {"eps", cfg.oracle.eps},
                 {"N", cfg.oracle.responses},          {"mixing", mixing},
                 {"history", cfg.oracle.history},      {"abs_floor", cfg.oracle.abs_floor}};
  j["recovery"] = {{"objective", to_string(cfg.recovery.objective)},
                   {"selection", to_string(cfg.recovery.selection)},
                   {"samples", cfg.recovery.samples},
                   {"every", cfg.recovery_every}};
  j["max_iterations"] = cfg.max_iterations;
  j["feasibility_threshold"] = cfg.feasibility_threshold;
  j["infeasibility_scale"] =
      cfg.infeasibility_scale > 0.0 ? nlohmann::json(cfg.infeasibility_scale) : nlohmann::json();
  j["track_dual_average"] = cfg.track_dual_average;
  j["output"] = cfg.output;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["stopping"] = {{"accpm_tol", cfg.stopping.accpm_tol},
                   {"subgrad_patience", cfg.stopping.subgrad_patience},
                   {"subgrad_tol", cfg.stopping.subgrad_tol},
                   {"eps_r", cfg.stopping.eps_r}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  // Relative instance files resolve against the config's directory.
  if (!cfg.instance.file.empty() && std::filesystem::path(cfg.instance.file).is_relative()) {
    cfg.instance.file = (path.parent_path() / cfg.instance.file).string();
  }
  return cfg;
}

// -- points -----------------------------------------------------------------

double suboptimality(double f, double f_star) {
  if (std::abs(f_star) < 1e-12) return f - f_star;
  return (f - f_star) / std::abs(f_star);
}

BlockPoint primal_average(std::span<const BlockPoint> history, int k) {
  if (k < 1 || k > static_cast<int>(history.size())) {
    throw std::invalid_argument("primal_average: k out of range");
  }
  BlockPoint avg = history[0];
  for (int j = 1; j < k; ++j) {
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += history[j][i];
  }
  for (Vector& v : avg) v /= k;
  return avg;
}

Projector::Projector(const Coupling& coupling, conic::Settings settings)
    : coupling_(coupling), settings_(settings) {
  for (int r = 0; r < coupling.rows(); ++r) {
    const RowKind kind = coupling.row_kind()[r];
    if (kind == RowKind::equality_lower) continue;
    rows_.push_back(r);
    free_.push_back(kind == RowKind::equality_upper);
  }
  const int p = static_cast<int>(rows_.size());
  gram_ = Matrix::Zero(p, p);
  for (const Matrix& a : coupling.blocks()) {
    Matrix sub(p, a.cols());
    for (int k = 0; k < p; ++k) sub.row(k) = a.row(rows_[k]);
    gram_.noalias() += sub * sub.transpose();
  }
}

BlockPoint Projector::operator()(const BlockPoint& x) const {
  const Vector v = coupling_.apply(x) - coupling_.b();
  const int p = static_cast<int>(rows_.size());
  bool inside = true;
  for (int k = 0; k < p; ++k) {
    const double e = v[rows_[k]];
    if (free_[k] ? e != 0.0 : e > 0.0) inside = false;
  }
  if (inside) return x;

  // min (1/2) mu'G mu - mu'v  s.t.  mu >= 0 on inequality rows
  conic::Program prog;
  prog.add_variables(p, "mu");
  conic::Affine obj;
  for (int i = 0; i < p; ++i) {
    obj.add(i, -v[rows_[i]]);
    prog.add_quadratic(i, i, gram_(i, i));
    for (int j = i + 1; j < p; ++j) {
      if (gram_(i, j) != 0.0) prog.add_quadratic(i, j, gram_(i, j));
    }
    if (!free_[i]) prog.add_nonneg(conic::Affine::variable(i));
  }
  prog.minimize(obj);
  const conic::SolveOutcome out = conic::solve(prog, settings_);
  if (!out.ok()) {
    throw std::runtime_error(std::string("projection QP failed: ") + conic::to_string(out.status));
  }
  Vector mu = Vector::Zero(coupling_.rows());
  for (int k = 0; k < p; ++k) mu[rows_[k]] = out.point[k];
  BlockPoint z = x;
  for (int i = 0; i < coupling_.num_blocks(); ++i) {
    z[i] -= coupling_.block(i).transpose() * mu;
  }
  return z;
}

BlockPoint project_feasible(const Coupling& coupling, const BlockPoint& x) {
  return Projector(coupling)(x);
}

// -- instance ---------------------------------------------------------------

Instance prepare_instance(const ExperimentConfig& cfg) {
  Instance inst;
  if (!cfg.instance.file.empty()) {
    inst = load_instance(cfg.instance.file);
  } else {
    std::string name = cfg.instance.generator;
    try {
      name = generator_for_family(name);
    } catch (const std::invalid_argument&) {
    }
    try {
      inst = generate(name, cfg.instance.seed, cfg.instance.params);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (!inst.reference) inst.reference = reference_solve(inst);
  return inst;
}

PriceBox price_box_from_reference(const Reference& ref, int m) {
  double lo = 0.0, hi = 0.0;
  if (ref.lambda_star.size() > 0) {
    lo = std::max(ref.lambda_star.minCoeff(), 0.0);
    hi = std::max(ref.lambda_star.maxCoeff(), 0.0);
  }
  if (!(hi > 0.0)) hi = 1.0;
  return make_price_box(lo, hi, m);
}

// -- loop -------------------------------------------------------------------

namespace {

struct Evaluator {
  const Instance& inst;
  double f_star;
  std::optional<double> scale;

  PointMetrics operator()(const BlockPoint& x, const Vector& lambda) const {
    PointMetrics pm;
    pm.present = true;
    const Residuals r = residuals(inst.coupling, x, lambda);
    pm.rp = r.rp;
    pm.rc = r.rc;
    pm.relinf = relative_primal_infeasibility(r, inst.coupling, scale);
    pm.domfeas = inst.in_domain(x, 1e-6);
    pm.f = pm.domfeas ? inst.objective(x) : std::numeric_limits<double>::quiet_NaN();
    pm.subopt = suboptimality(pm.f, f_star);
    return pm;
  }
};

ResponseBundle leading_columns(const ResponseBundle& b, int count) {
  ResponseBundle out;
  out.Z = b.Z.leftCols(count);
  out.f_values.assign(b.f_values.begin(), b.f_values.begin() + count);
  out.lagrangian_values.assign(b.lagrangian_values.begin(), b.lagrangian_values.begin() + count);
  out.tags.assign(b.tags.begin(), b.tags.begin() + count);
  out.dropped = b.dropped;
  return out;
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Instance& inst,
                                const IterationObserver& observer) {
  cfg.validate();
  if (!inst.reference) throw std::invalid_argument("run_experiment: instance has no reference");
  const Reference& ref = *inst.reference;
  const Coupling& coupling = inst.coupling;
  const int K = inst.num_agents();
  const int m = coupling.rows();
  const int threads = resolve_threads(cfg.threads);

  std::optional<double> scale;
  if (cfg.infeasibility_scale > 0.0) {
    scale = cfg.infeasibility_scale;
  } else {
    scale = inst.infeasibility_scale();
  }
  const Evaluator eval{inst, ref.f_star, scale};

  OracleConfig oracle = cfg.oracle;
  oracle.seed = cfg.seed;
  RecoveryConfig recovery = cfg.recovery;
  recovery.seed = cfg.seed;

  const PriceBox box = price_box_from_reference(ref, m);
  std::optional<Accpm> accpm;
  std::optional<Subgradient> subgrad;
  if (cfg.method == Method::accpm) {
    AccpmOptions opts;
    opts.stop_tol = cfg.stopping.accpm_tol;
    accpm.emplace(box, opts);
  } else {
    subgrad.emplace(box, cfg.step_rule, (box.lower + box.upper) / 2.0, cfg.stopping.subgrad_tol,
                    cfg.stopping.subgrad_patience);
  }
  const Projector project(coupling);

  ExperimentResult result;
  result.step_rule = cfg.step_rule;
  result.stop_reason = "max_iterations";
  std::vector<std::deque<ResponseBundle>> history(K);
  BlockPoint avg_sum;
  std::vector<ResponseBundle> bundles(K);

  for (int k = 1; k <= cfg.max_iterations; ++k) {
    const Vector lambda = accpm ? accpm->query_price() : subgrad->lambda();
    const std::vector<Vector> y = local_prices(coupling, lambda);

    parallel_for(K, threads, [&](int i) {
      const std::vector<ResponseBundle> prior(history[i].begin(), history[i].end());
      bundles[i] = compose_bundle(*inst.agents[i], y[i], oracle, k, prior);
    });

    IterationRecord rec;
    rec.k = k;
    BlockPoint raw(K);
    double g = -lambda.dot(coupling.b());
    for (int i = 0; i < K; ++i) {
      raw[i] = bundles[i].Z.col(0);
      g += bundles[i].lagrangian_values[0];
    }
    rec.g_lambda = g;
    rec.at(TrackedPoint::raw) = eval(raw, lambda);

    if (avg_sum.empty()) {
      avg_sum = raw;
    } else {
      for (int i = 0; i < K; ++i) avg_sum[i] += raw[i];
    }
    BlockPoint avg = avg_sum;
    for (Vector& v : avg) v /= k;
    rec.at(TrackedPoint::avg) = eval(avg, lambda);

    std::optional<RecoveryResult> recovered;
    if (k % cfg.recovery_every == 0) {
      recovered = recover(bundles, coupling, lambda, recovery, k);
      rec.at(TrackedPoint::mra) = eval(recovered->x_bar, lambda);
    }

    rec.at(TrackedPoint::proj) = eval(project(raw), lambda);

    for (int i = 0; i < K; ++i) {
      int fresh = bundles[i].width();
      for (const ResponseBundle& h : history[i]) fresh -= h.width();
      if (oracle.history > 1) {
        history[i].push_back(leading_columns(bundles[i], fresh));
        while (static_cast<int>(history[i].size()) > oracle.history - 1) history[i].pop_front();
      }
    }

    bool stop = false;
    if (accpm) {
      const std::optional<Cut> cut = generate_cut(coupling, raw, lambda, k);
      if (!cut) {
        stop = true;
        result.stop_reason = "accpm";
      } else if (accpm->add_cut(*cut)) {
        stop = true;
        result.stop_reason = "accpm";
      }
    } else {
      subgrad->step(g, coupling.b() - coupling.apply(raw));
      if (subgrad->stalled()) {
        stop = true;
        result.stop_reason = "subgradient";
      }
    }

    if (accpm && cfg.track_dual_average) {
      const DualAverage da = accpm->averaged_dual();
      const std::vector<Vector> y_bar = local_prices(coupling, da.lambda);
      BlockPoint x_bar(K);
      parallel_for(K, threads, [&](int i) {
        x_bar[i] = conjugate_oracle(*inst.agents[i], y_bar[i], oracle.use_analytic, oracle.solver).x;
      });
      rec.at(TrackedPoint::dualavg) = eval(x_bar, da.lambda);
    }

    if (recovered && cfg.stopping.eps_r > 0.0 &&
        stopping_check(recovered->residuals, cfg.stopping.eps_r)) {
      stop = true;
      result.stop_reason = "eps_r";
    }

    if (observer) {
      bool requested = false;
      observer(IterationView{k, lambda, y, bundles, raw, recovered ? &*recovered : nullptr, rec,
                             requested});
      if (requested && !stop) {
        stop = true;
        result.stop_reason = "observer";
      }
    }
    result.records.push_back(rec);
    result.final_lambda = lambda;
    if (stop) break;
  }
  return result;
}

int select_step_rule(std::span<const ExperimentResult> runs) {
  int selected = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& recs = runs[r].records;
    if (recs.empty()) continue;
    const double rp = recs.back().at(TrackedPoint::raw).rp;
    if (rp < best) {
      best = rp;
      selected = static_cast<int>(r);
    }
  }
  return selected;
}

SweepResult run_step_sweep(const ExperimentConfig& cfg, const Instance& instance) {
  SweepResult sweep;
  for (StepRule rule : kAllStepRules) {
    ExperimentConfig c = cfg;
    c.method = Method::subgradient;
    c.sweep_steps = false;
    c.step_rule = rule;
    sweep.runs.push_back(run_experiment(c, instance));
  }
  sweep.selected = select_step_rule(sweep.runs);
  return sweep;
}

}  // namespace mra
