#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include <bg/energy/dimer.hpp>
#include <bg/energy/double_well.hpp>
#include <bg/energy/mueller.hpp>
#include <bg/energy/toy_chain.hpp>
#include <bg/flow/stack.hpp>
#include <bg/train/trainer.hpp>

namespace bg {

// Strict reader over one JSON object: typed accessors record which keys were
// consumed, finish() reports the rest as unknown. All problems accumulate in
// a shared error list so a bad config is reported exhaustively, not one
// complaint at a time.
class JsonView {
 public:
  JsonView(const nlohmann::json* j, std::string where, std::vector<std::string>* errors)
      : j_(j), where_(std::move(where)), errors_(errors) {
    if (j_ && !j_->is_object()) {
      error("must be an object");
      j_ = nullptr;
    }
  }

  bool present() const { return j_ != nullptr; }
  bool has(const std::string& key) const { return j_ && j_->contains(key); }
  const std::string& where() const { return where_; }

  void error(const std::string& msg) const { errors_->push_back(where_ + ": " + msg); }

  double number(const std::string& key, double def) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_number()) { key_error(key, "must be a number"); return def; }
    return p->get<double>();
  }

  double required_number(const std::string& key) {
    if (!has(key)) { key_error(key, "is required"); return 0.0; }
    return number(key, 0.0);
  }

  long integer(const std::string& key, long def) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_number_integer()) { key_error(key, "must be an integer"); return def; }
    return p->get<long>();
  }

  long required_integer(const std::string& key) {
    if (!has(key)) { key_error(key, "is required"); return 0; }
    return integer(key, 0);
  }

  bool boolean(const std::string& key, bool def) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_boolean()) { key_error(key, "must be a boolean"); return def; }
    return p->get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_string()) { key_error(key, "must be a string"); return def; }
    return p->get<std::string>();
  }

  std::string required_str(const std::string& key) {
    if (!has(key)) { key_error(key, "is required"); return {}; }
    return str(key, {});
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def = {}) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_array()) { key_error(key, "must be an array of numbers"); return def; }
    std::vector<double> out;
    for (const auto& e : *p) {
      if (!e.is_number()) { key_error(key, "must be an array of numbers"); return def; }
      out.push_back(e.get<double>());
    }
    return out;
  }

  // Array of numeric arrays, e.g. a list of coordinate vectors.
  std::vector<std::vector<double>> number_rows(const std::string& key) {
    const nlohmann::json* p = raw(key);
    std::vector<std::vector<double>> out;
    if (!p) return out;
    if (!p->is_array()) { key_error(key, "must be an array of numeric arrays"); return out; }
    for (const auto& e : *p) {
      if (!e.is_array()) { key_error(key, "must be an array of numeric arrays"); return {}; }
      std::vector<double> row;
      for (const auto& v : e) {
        if (!v.is_number()) { key_error(key, "must be an array of numeric arrays"); return {}; }
        row.push_back(v.get<double>());
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  std::vector<long> integers(const std::string& key, std::vector<long> def = {}) {
    const nlohmann::json* p = raw(key);
    if (!p) return def;
    if (!p->is_array()) { key_error(key, "must be an array of integers"); return def; }
    std::vector<long> out;
    for (const auto& e : *p) {
      if (!e.is_number_integer()) { key_error(key, "must be an array of integers"); return def; }
      out.push_back(e.get<long>());
    }
    return out;
  }

  JsonView object(const std::string& key) {
    const nlohmann::json* p = raw(key);
    if (p && !p->is_object()) {
      key_error(key, "must be an object");
      p = nullptr;
    }
    return JsonView(p, where_ + "." + key, errors_);
  }

  // Array of objects; missing key yields an empty list.
  std::vector<JsonView> objects(const std::string& key) {
    const nlohmann::json* p = raw(key);
    std::vector<JsonView> out;
    if (!p) return out;
    if (!p->is_array()) { key_error(key, "must be an array of objects"); return out; }
    for (std::size_t i = 0; i < p->size(); ++i) {
      const nlohmann::json& e = (*p)[i];
      out.emplace_back(e.is_object() ? &e : nullptr,
                       where_ + "." + key + "[" + std::to_string(i) + "]", errors_);
      if (!e.is_object()) errors_->push_back(out.back().where() + ": must be an object");
    }
    return out;
  }

  void finish() const {
    if (!j_) return;
    for (const auto& item : j_->items())
      if (!used_.count(item.key())) key_error(item.key(), "unknown key");
  }

 private:
  const nlohmann::json* raw(const std::string& key) {
    if (!j_) return nullptr;
    used_.insert(key);
    return j_->contains(key) ? &j_->at(key) : nullptr;
  }

  void key_error(const std::string& key, const std::string& msg) const {
    errors_->push_back(where_ + ": '" + key + "' " + msg);
  }

  const nlohmann::json* j_;
  std::string where_;
  std::vector<std::string>* errors_;
  std::set<std::string> used_;
};

struct SystemInfo {
  EnergyModelPtr model;
  std::string name;
  ZMatrixSpec zmatrix;     // non-empty only for chain systems
  Vector x0;               // reasonable low-energy starting configuration
  double proposal_sigma = 0.1;  // local-move std at tau = 1
};

inline Vector dimer_lattice_x0(const ParticleDimer::Params& p) {
  require(p.n_solvent == 36, "dimer lattice start expects 36 solvent particles");
  Vector x(2 * (p.n_solvent + 2));
  x[0] = -0.5 * p.d0; x[1] = 0.0;
  x[2] = 0.5 * p.d0;  x[3] = 0.0;
  Eigen::Index k = 4;
  for (int ix = 0; ix < 7; ++ix)
    for (int iy = 0; iy < 6; ++iy) {
      const double gx = -2.7 + 0.9 * ix;
      const double gy = -2.25 + 0.9 * iy;
      if (std::abs(gx) <= 0.95 && std::abs(gy) <= 0.5) continue;  // dimer pocket
      x[k++] = gx;
      x[k++] = gy;
    }
  require(k == x.size(), "dimer lattice start: slot count mismatch");
  return x;
}

inline SystemInfo make_system(JsonView sv) {
  SystemInfo info;
  info.name = sv.required_str("name");
  try {
    if (info.name == "double_well") {
      const double a = sv.number("a", 1.0), b = sv.number("b", 6.0);
      const double c = sv.number("c", 1.0), d = sv.number("d", 1.0);
      info.model = std::make_shared<DoubleWell>(a, b, c, d);
      info.x0 = Vector::Zero(2);
      info.x0[0] = -2.5;
      info.proposal_sigma = 0.1;
    } else if (info.name == "mueller") {
      info.model = std::make_shared<MuellerPotential>(sv.number("alpha", 0.1));
      info.x0 = Vector::Zero(2);
      info.x0[0] = -0.558;
      info.x0[1] = 1.442;
      info.proposal_sigma = 0.05;
    } else if (info.name == "particle_dimer") {
      ParticleDimer::Params p;
      p.eps = sv.number("eps", p.eps);
      p.sigma = sv.number("sigma", p.sigma);
      p.k_d = sv.number("k_d", p.k_d);
      p.d0 = sv.number("d0", p.d0);
      p.a = sv.number("a", p.a);
      p.b = sv.number("b", p.b);
      p.c = sv.number("c", p.c);
      p.l_box = sv.number("l_box", p.l_box);
      p.k_box = sv.number("k_box", p.k_box);
      p.n_solvent = static_cast<int>(sv.integer("n_solvent", p.n_solvent));
      info.model = std::make_shared<ParticleDimer>(p);
      if (p.n_solvent == 36) info.x0 = dimer_lattice_x0(p);
      info.proposal_sigma = 0.02;
    } else if (info.name == "toy_chain") {
      ToyChain::Params p;
      p.n_beads = static_cast<int>(sv.integer("n_beads", p.n_beads));
      p.k_bond = sv.number("k_bond", p.k_bond);
      p.d0 = sv.number("d0", p.d0);
      p.k_angle = sv.number("k_angle", p.k_angle);
      p.alpha0 = sv.number("alpha0", p.alpha0);
      p.k_tor1 = sv.number("k_tor1", p.k_tor1);
      p.k_tor3 = sv.number("k_tor3", p.k_tor3);
      auto chain = std::make_shared<ToyChain>(p);
      info.zmatrix = chain->zmatrix();
      info.x0 = chain->reference_configuration();
      info.model = chain;
      info.proposal_sigma = 0.05;
    } else if (!info.name.empty()) {
      sv.error("unknown system '" + info.name + "'");
    }
  } catch (const std::exception& e) {
    sv.error(e.what());
  }
  sv.finish();
  return info;
}

inline RCFunction make_rc(JsonView rv) {
  RCFunction rc;
  const std::string kind = rv.required_str("kind");
  if (kind == "coordinate") {
    rc.kind = RCFunction::Kind::Coordinate;
    rc.index = static_cast<int>(rv.required_integer("index"));
  } else if (kind == "projection") {
    rc.kind = RCFunction::Kind::Projection;
    const std::vector<double> w = rv.numbers("w");
    rc.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    if (w.empty()) rv.error("'w' is required and must be non-empty");
  } else if (kind == "pair_distance") {
    rc.kind = RCFunction::Kind::PairDistance;
    rc.pi = static_cast<int>(rv.required_integer("i"));
    rc.pj = static_cast<int>(rv.required_integer("j"));
    rc.pdim = static_cast<int>(rv.integer("pdim", 2));
  } else if (!kind.empty()) {
    rv.error("unknown observable kind '" + kind + "'");
  }
  rv.finish();
  return rc;
}

inline FlowConfig make_flow_config(JsonView fv, const ZMatrixSpec& zmatrix) {
  FlowConfig cfg;
  cfg.architecture = fv.str("architecture", cfg.architecture);
  cfg.hidden_layers = static_cast<int>(fv.integer("hidden_layers", cfg.hidden_layers));
  cfg.hidden_width = fv.integer("hidden_width", cfg.hidden_width);
  cfg.scale_cap = fv.number("scale_cap", cfg.scale_cap);
  cfg.discard_null = static_cast<int>(fv.integer("discard_null", cfg.discard_null));
  cfg.zmatrix = zmatrix;
  if (cfg.hidden_layers < 0) fv.error("'hidden_layers' must be >= 0");
  if (cfg.hidden_width < 1) fv.error("'hidden_width' must be >= 1");
  if (cfg.scale_cap <= 0.0) fv.error("'scale_cap' must be > 0");
  fv.finish();
  return cfg;
}

inline TrainConfig make_train_config(JsonView tv, std::string* data_path) {
  TrainConfig cfg;
  *data_path = tv.str("data", "");
  cfg.ml_sigma2 = tv.number("ml_sigma2", cfg.ml_sigma2);
  cfg.relabel_data = tv.boolean("relabel_data", cfg.relabel_data);
  cfg.ema_half_life = tv.number("ema_half_life", cfg.ema_half_life);
  if (tv.has("observable")) cfg.rc = make_rc(tv.object("observable"));
  cfg.rc_entropy.lo = tv.number("rc_min", 0.0);
  cfg.rc_entropy.hi = tv.number("rc_max", 1.0);
  cfg.rc_entropy.bins = static_cast<int>(tv.integer("rc_bins", cfg.rc_entropy.bins));
  for (JsonView& stv : tv.objects("stages")) {
    TrainingStage s;
    s.iterations = static_cast<int>(stv.integer("iter", s.iterations));
    s.batch_size = static_cast<int>(stv.integer("batch", s.batch_size));
    s.lr = stv.number("lr", s.lr);
    s.w_ml = stv.number("w_ML", 0.0);
    s.w_kl = stv.number("w_KL", 0.0);
    s.w_rc = stv.number("w_RC", 0.0);
    s.w_torsion = stv.number("w_torsion", 0.0);
    s.e_high = stv.number("E_high", s.e_high);
    s.e_max = stv.number("E_max", s.e_max);
    s.temperatures = stv.numbers("temperatures", {1.0});
    stv.finish();
    cfg.stages.push_back(std::move(s));
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    tv.error(e.what());
  }
  tv.finish();
  return cfg;
}

// fnv1a over the canonical (sorted-key) dump; stable across reruns.
inline std::string config_hash(const nlohmann::json& j) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
}

}  // namespace bg
