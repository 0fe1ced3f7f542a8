#include <set>

#include "vmm/cli.hpp"
#include "vmm/errors.hpp"

namespace vmm::cli {

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& target) {
    if (const Json* v = find(key)) target = convert<T>(*v, key);
  }

  template <typename T>
  void get(const char* key, std::optional<T>& target) {
    if (const Json* v = find(key)) target = convert<T>(*v, key);
  }

  void get(const char* key, Vector& target) {
    if (const Json* v = find(key)) target = vector_of(*v, key);
  }

  void get(const char* key, std::optional<Vector>& target) {
    if (const Json* v = find(key)) target = vector_of(*v, key);
  }

  /// Nested object, or nullptr when absent or null.
  const Json* object(const char* key) { return find(key); }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw UsageError("unknown config key '" + child(it.key().c_str()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  template <typename T>
  T convert(const Json& v, const char* key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw UsageError("'" + child(key) + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw UsageError("'" + child(key) + "' must be an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        throw UsageError("'" + child(key) + "' must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw UsageError("'" + child(key) + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw UsageError("'" + child(key) + "' must be a string");
    }
    try {
      return v.get<T>();
    } catch (const Json::exception& e) {
      throw UsageError("'" + child(key) + "': " + e.what());
    }
  }

  Vector vector_of(const Json& v, const char* key) const {
    if (!v.is_array()) throw UsageError("'" + child(key) + "' must be an array of numbers");
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw UsageError("'" + child(key) + "' must be an array of numbers");
      out(static_cast<Index>(i)) = v[i].get<double>();
    }
    return out;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json kernel_json(const KernelSpec& k) {
  Json j;
  j["kind"] = to_string(k.kind);
  if (k.kind == KernelKind::kGaussian) j["bandwidth"] = k.bandwidth;
  if (k.kind == KernelKind::kPolynomial) {
    j["degree"] = k.degree;
    j["offset"] = k.offset;
  }
  return j;
}

KernelSpec kernel_from_json(const Json& j, const std::string& path) {
  Reader r(j, path);
  std::string kind = "gaussian";
  r.get("kind", kind);
  KernelSpec k;
  try {
    k.kind = kernel_kind_from_string(kind);
  } catch (const Error& e) {
    throw UsageError("'" + r.child("kind") + "': " + e.what());
  }
  if (k.kind == KernelKind::kGaussian) r.get("bandwidth", k.bandwidth);
  if (k.kind == KernelKind::kPolynomial) {
    r.get("degree", k.degree);
    r.get("offset", k.offset);
  }
  r.finish();
  return k;
}

Json box_json(const std::optional<Box>& box) {
  if (!box) return nullptr;
  return Json{{"lower", vector_json(box->lower)}, {"upper", vector_json(box->upper)}};
}

std::string to_string(FirstStageWeight w) { return w == FirstStageWeight::kIdentity ? "identity" : "gamma_at_prior"; }
std::string to_string(UpdateRule r) { return r == UpdateRule::kAdam ? "adam" : "gradient"; }

template <typename Enum>
Enum parse_enum(const std::string& value, std::initializer_list<std::pair<const char*, Enum>> options,
                const std::string& path) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  throw UsageError("'" + path + "' must be one of: " + allowed);
}

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names{"owgmm", "kernel-vmm", "kernel-iv", "neural-vmm"};
  return names;
}

void read_estimator(const Json& j, const std::string& path, EstimatorSettings& s) {
  EstimatorConfig& c = s.config;
  Reader r(j, path);
  r.get("kind", s.kind);
  r.get("k", c.k);
  r.get("theta_init", c.theta_init);
  if (const Json* ks = r.object("kernels")) {
    if (!ks->is_array()) throw UsageError("'" + r.child("kernels") + "' must be an array");
    c.kernels.clear();
    for (std::size_t i = 0; i < ks->size(); ++i) {
      c.kernels.push_back(kernel_from_json((*ks)[i], r.child("kernels") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const Json* a = r.object("alpha")) {
    Reader ar(*a, r.child("alpha"));
    ar.get("scale", c.vmm.alpha.scale);
    ar.get("exponent", c.vmm.alpha.exponent);
    ar.finish();
  }
  if (const Json* o = r.object("optimizer")) {
    Reader orr(*o, r.child("optimizer"));
    orr.get("gradient_tolerance", c.vmm.optimizer.gradient_tolerance);
    orr.get("improvement_tolerance", c.vmm.optimizer.improvement_tolerance);
    orr.get("max_iterations", c.vmm.optimizer.max_iterations);
    orr.finish();
  }
  r.get("restarts", c.vmm.restarts);
  if (const Json* b = r.object("box")) {
    Reader br(*b, r.child("box"));
    Box box;
    br.get("lower", box.lower);
    br.get("upper", box.upper);
    br.finish();
    c.vmm.box = box;
  }
  r.get("intervals", c.intervals);
  r.get("level", c.level);
  if (const Json* o = r.object("owgmm")) {
    Reader orr(*o, r.child("owgmm"));
    orr.get("basis_degree", c.basis_degree);
    orr.get("steps", c.owgmm.steps);
    std::string first = to_string(c.owgmm.first_stage);
    orr.get("first_stage", first);
    c.owgmm.first_stage = parse_enum<FirstStageWeight>(
        first, {{"gamma_at_prior", FirstStageWeight::kGammaAtPrior}, {"identity", FirstStageWeight::kIdentity}},
        orr.child("first_stage"));
    orr.finish();
  }
  if (const Json* o = r.object("kernel_iv")) {
    Reader kr(*o, r.child("kernel_iv"));
    kr.get("lambda", s.lambda);
    if (const Json* g = kr.object("kernel_g")) s.kernel_g = kernel_from_json(*g, kr.child("kernel_g"));
    kr.finish();
  }
  if (const Json* o = r.object("neural")) {
    Reader nr(*o, r.child("neural"));
    nr.get("width", c.net_width);
    nr.get("depth", c.net_depth);
    std::string reg = c.neural_kernel_regularizer ? "kernel" : "frobenius";
    nr.get("regularizer", reg);
    c.neural_kernel_regularizer =
        parse_enum<bool>(reg, {{"frobenius", false}, {"kernel", true}}, nr.child("regularizer"));
    nr.get("alpha", c.neural_alpha);
    nr.get("adversary_steps", c.minimax.adversary_steps);
    nr.get("adversary_rate", c.minimax.adversary_rate);
    nr.get("theta_rate", c.minimax.theta_rate);
    nr.get("outer_iterations", c.minimax.outer_iterations);
    nr.get("batch_size", c.minimax.batch_size);
    std::string rule = to_string(c.minimax.adversary_rule);
    nr.get("adversary_rule", rule);
    c.minimax.adversary_rule =
        parse_enum<UpdateRule>(rule, {{"gradient", UpdateRule::kGradient}, {"adam", UpdateRule::kAdam}},
                               nr.child("adversary_rule"));
    nr.get("solve_output_layer", c.minimax.solve_output_layer);
    nr.finish();
  }
  r.finish();
}

void apply_seed(EstimatorSettings& s, std::uint64_t seed) {
  s.config.vmm.seed = seed;
  s.config.owgmm.seed = seed;
  s.config.minimax.seed = seed;
}

// OWGMM shares the optimizer settings of the kernel estimators.
void sync_owgmm(EstimatorSettings& s) {
  s.config.owgmm.optimizer = s.config.vmm.optimizer;
  s.config.owgmm.restarts = s.config.vmm.restarts;
  s.config.owgmm.box = s.config.vmm.box;
  s.config.minimax.box = s.config.vmm.box;
}

}  // namespace

void EstimatorSettings::validate() const {
  bool known = false;
  for (const std::string& name : estimator_names()) known = known || name == kind;
  if (!known) throw UsageError("unknown estimator '" + kind + "' (expected owgmm, kernel-vmm, kernel-iv or neural-vmm)");
  try {
    config.validate();
    if (config.vmm.box) config.vmm.box->validate();
    if (kernel_g) kernel_g->validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid estimator settings: ") + e.what());
  }
  if (!(lambda > 0.0)) throw UsageError("kernel_iv.lambda must be positive");
}

Json to_json(const EstimatorSettings& s) {
  const EstimatorConfig& c = s.config;
  Json j;
  j["kind"] = s.kind;
  j["k"] = c.k;
  j["theta_init"] = c.theta_init ? vector_json(*c.theta_init) : Json(nullptr);
  j["kernels"] = Json::array();
  for (const KernelSpec& k : c.kernels) j["kernels"].push_back(kernel_json(k));
  j["alpha"] = {{"scale", c.vmm.alpha.scale}, {"exponent", c.vmm.alpha.exponent}};
  j["optimizer"] = {{"gradient_tolerance", c.vmm.optimizer.gradient_tolerance},
                    {"improvement_tolerance", c.vmm.optimizer.improvement_tolerance},
                    {"max_iterations", c.vmm.optimizer.max_iterations}};
  j["restarts"] = c.vmm.restarts;
  j["box"] = box_json(c.vmm.box);
  j["intervals"] = c.intervals;
  j["level"] = c.level;
  j["owgmm"] = {{"basis_degree", c.basis_degree},
                {"steps", c.owgmm.steps},
                {"first_stage", to_string(c.owgmm.first_stage)}};
  j["kernel_iv"] = {{"lambda", s.lambda}, {"kernel_g", s.kernel_g ? kernel_json(*s.kernel_g) : Json(nullptr)}};
  j["neural"] = {{"width", c.net_width},
                 {"depth", c.net_depth},
                 {"regularizer", c.neural_kernel_regularizer ? "kernel" : "frobenius"},
                 {"alpha", c.neural_alpha},
                 {"adversary_steps", c.minimax.adversary_steps},
                 {"adversary_rate", c.minimax.adversary_rate},
                 {"theta_rate", c.minimax.theta_rate},
                 {"outer_iterations", c.minimax.outer_iterations},
                 {"batch_size", c.minimax.batch_size},
                 {"adversary_rule", to_string(c.minimax.adversary_rule)},
                 {"solve_output_layer", c.minimax.solve_output_layer}};
  return j;
}

void EstimateConfig::validate() const {
  if (problem != "linear_iv" && problem != "quantile_iv") {
    throw UsageError("problem.kind must be linear_iv or quantile_iv, not '" + problem + "'");
  }
  if (problem == "quantile_iv" && !(quantile > 0.0 && quantile < 1.0)) throw UsageError("problem.quantile must lie in (0, 1)");
  if (temperature && !(*temperature > 0.0)) throw UsageError("problem.temperature must be positive");
  if (z_columns.empty()) throw UsageError("layout.z must name at least one column");
  if (t_columns.empty()) throw UsageError("layout.t must name at least one column");
  if (y_column.empty()) throw UsageError("layout.y must name a column");
  if (data.empty()) throw UsageError("no data file given (--data or \"data\")");
  if (out.empty()) throw UsageError("no report path given (--out or \"out\")");
  estimator.validate();
  if (estimator.kind == "kernel-iv" && problem != "linear_iv") throw UsageError("kernel-iv requires problem.kind linear_iv");
  const auto b = static_cast<Index>(t_columns.size());
  if (estimator.config.theta_init && estimator.config.theta_init->size() != b) {
    throw UsageError("estimator.theta_init must have one entry per treatment column");
  }
  if (estimator.config.vmm.box && estimator.config.vmm.box->dim() != b) {
    throw UsageError("estimator.box must have one entry per treatment column");
  }
}

Json to_json(const EstimateConfig& c) {
  Json j;
  j["problem"] = {{"kind", c.problem}, {"quantile", c.quantile}, {"temperature", optional_json(c.temperature)}};
  j["layout"] = {{"z", c.z_columns}, {"t", c.t_columns}, {"y", c.y_column}};
  j["estimator"] = to_json(c.estimator);
  j["seed"] = c.seed;
  j["data"] = c.data;
  j["out"] = c.out;
  j["residuals"] = optional_json(c.residuals);
  return j;
}

EstimateConfig estimate_config_from_json(const Json& j) {
  EstimateConfig c;
  Reader r(j, "");
  if (const Json* p = r.object("problem")) {
    Reader pr(*p, "problem");
    pr.get("kind", c.problem);
    pr.get("quantile", c.quantile);
    pr.get("temperature", c.temperature);
    pr.finish();
  }
  if (const Json* l = r.object("layout")) {
    Reader lr(*l, "layout");
    lr.get("z", c.z_columns);
    lr.get("t", c.t_columns);
    lr.get("y", c.y_column);
    lr.finish();
  }
  if (const Json* e = r.object("estimator")) read_estimator(*e, "estimator", c.estimator);
  r.get("seed", c.seed);
  r.get("data", c.data);
  r.get("out", c.out);
  r.get("residuals", c.residuals);
  r.finish();
  finalize(c);
  return c;
}

void finalize(EstimateConfig& c) {
  apply_seed(c.estimator, c.seed);
  sync_owgmm(c.estimator);
}

void finalize(SimulateConfig& c) {
  c.dgp.seed = c.seed;
  apply_seed(c.estimator, c.seed);
  sync_owgmm(c.estimator);
}

void SimulateConfig::validate() const {
  try {
    dgp.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid dgp: ") + e.what());
  }
  if (n < 2) throw UsageError("n must be at least 2");
  if (reps < 1) throw UsageError("reps must be at least 1");
  if (!(efficiency_band > 0.0)) throw UsageError("efficiency_band must be positive");
  if (out_dir.empty()) throw UsageError("no output directory given (--out-dir or \"out_dir\")");
  estimator.validate();
  if (estimator.kind == "kernel-iv") throw UsageError("simulate supports owgmm, kernel-vmm and neural-vmm");
  const Index b = dgp.param_dim();
  if (estimator.config.theta_init && estimator.config.theta_init->size() != b) {
    throw UsageError("estimator.theta_init has the wrong dimension for this design");
  }
}

Json to_json(const SimulateConfig& c) {
  const DgpSpec& d = c.dgp;
  Json j;
  j["dgp"] = {{"kind", to_string(d.kind)},
              {"theta0", vector_json(d.theta0)},
              {"a", d.a},
              {"sigma", d.sigma},
              {"rho_c", d.rho_c},
              {"hetero_scale", to_string(d.hetero_scale)},
              {"quantile", d.quantile},
              {"smoothing_temperature", optional_json(d.smoothing_temperature)},
              {"behavior_policy", d.behavior_policy},
              {"target_policy", d.target_policy},
              {"chain_fidelity", d.chain_fidelity}};
  j["estimator"] = to_json(c.estimator);
  j["n"] = c.n;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["efficiency_band"] = c.efficiency_band;
  j["out_dir"] = c.out_dir;
  return j;
}

SimulateConfig simulate_config_from_json(const Json& j) {
  SimulateConfig c;
  Reader r(j, "");
  if (const Json* dj = r.object("dgp")) {
    Reader dr(*dj, "dgp");
    DgpSpec& d = c.dgp;
    std::string kind = to_string(d.kind);
    dr.get("kind", kind);
    std::string scale = to_string(d.hetero_scale);
    dr.get("hetero_scale", scale);
    try {
      d.kind = dgp_kind_from_string(kind);
      d.hetero_scale = hetero_scale_from_string(scale);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    dr.get("theta0", d.theta0);
    dr.get("a", d.a);
    dr.get("sigma", d.sigma);
    dr.get("rho_c", d.rho_c);
    dr.get("quantile", d.quantile);
    dr.get("smoothing_temperature", d.smoothing_temperature);
    dr.get("behavior_policy", d.behavior_policy);
    dr.get("target_policy", d.target_policy);
    dr.get("chain_fidelity", d.chain_fidelity);
    dr.finish();
  }
  if (const Json* e = r.object("estimator")) read_estimator(*e, "estimator", c.estimator);
  r.get("n", c.n);
  r.get("reps", c.reps);
  r.get("seed", c.seed);
  r.get("efficiency_band", c.efficiency_band);
  r.get("out_dir", c.out_dir);
  r.finish();
  finalize(c);
  return c;
}

}  // namespace vmm::cli
