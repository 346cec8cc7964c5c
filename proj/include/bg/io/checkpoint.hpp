#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include <bg/flow/stack.hpp>

namespace bg {

using json = nlohmann::json;

inline json json_from_vector(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline json json_from_matrix(const Matrix& m) {
  json a = json::array();  // column-major flat
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(a)}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& a = j.at("data");
  require(static_cast<Eigen::Index>(a.size()) == m.size(), "checkpoint: matrix size mismatch");
  std::size_t k = 0;
  for (Eigen::Index jj = 0; jj < m.cols(); ++jj)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, jj) = a[k++].get<double>();
  return m;
}

inline json json_from_net(const DenseNet& net) {
  json layers = json::array();
  for (const auto& l : net.layers)
    layers.push_back(json{{"act", act_name(l.act)},
                          {"W", json_from_matrix(l.W)},
                          {"b", json_from_vector(l.b)}});
  return json{{"output_scale", net.output_scale}, {"layers", std::move(layers)}};
}

inline DenseNet net_from_json(const json& j) {
  DenseNet net;
  net.output_scale = j.at("output_scale").get<double>();
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    l.act = act_from_name(lj.at("act").get<std::string>());
    l.W = matrix_from_json(lj.at("W"));
    l.b = vector_from_json(lj.at("b"));
    net.layers.push_back(std::move(l));
  }
  require(!net.layers.empty(), "checkpoint: empty net");
  return net;
}

inline json json_from_whitening(const WhiteningLayer& w) {
  return json{{"mean", json_from_vector(w.mean)},
              {"basis", json_from_matrix(w.basis)},
              {"lambda", json_from_vector(w.lambda)},
              {"sum_log_lambda", w.sum_log_lambda}};
}

inline WhiteningLayer whitening_from_json(const json& j) {
  WhiteningLayer w;
  w.mean = vector_from_json(j.at("mean"));
  w.basis = matrix_from_json(j.at("basis"));
  w.lambda = vector_from_json(j.at("lambda"));
  w.sum_log_lambda = j.at("sum_log_lambda").get<double>();
  require(w.basis.rows() == w.mean.size() && w.basis.cols() == w.lambda.size(),
          "checkpoint: inconsistent whitening shapes");
  return w;
}

inline json json_from_layer(const FlowLayer& layer) {
  if (const auto* w = std::get_if<WhiteningLayer>(&layer)) {
    json j = json_from_whitening(*w);
    j["kind"] = "whitening";
    return j;
  }
  if (const auto* m = std::get_if<MixedLayer>(&layer)) {
    json internal = json::array();
    for (const auto& e : m->spec.internal)
      internal.push_back(json::array({e.particle, e.j, e.k, e.l}));
    return json{{"kind", "mixed"},
                {"n_particles", m->spec.n_particles},
                {"cartesian", m->spec.cartesian},
                {"internal", std::move(internal)},
                {"whitening", json_from_whitening(m->whitening)},
                {"ic_mean", json_from_vector(m->ic_mean)},
                {"ic_std", json_from_vector(m->ic_std)},
                {"sum_log_ic_std", m->sum_log_ic_std}};
  }
  const auto& c = std::get<CouplingLayer>(layer);
  return json{{"kind", "coupling"},
              {"idx_cond", c.idx_cond},
              {"idx_trans", c.idx_trans},
              {"s_net", json_from_net(c.s_net)},
              {"t_net", json_from_net(c.t_net)}};
}

inline FlowLayer layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "whitening") return whitening_from_json(j);
  if (kind == "mixed") {
    MixedLayer m;
    m.spec.n_particles = j.at("n_particles").get<int>();
    m.spec.cartesian = j.at("cartesian").get<std::vector<int>>();
    for (const auto& e : j.at("internal")) {
      require(e.size() == 4, "checkpoint: internal entry needs 4 indices");
      m.spec.internal.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>(), e[3].get<int>()});
    }
    m.spec.validate();
    m.whitening = whitening_from_json(j.at("whitening"));
    m.ic_mean = vector_from_json(j.at("ic_mean"));
    m.ic_std = vector_from_json(j.at("ic_std"));
    m.sum_log_ic_std = j.at("sum_log_ic_std").get<double>();
    require(m.ic_mean.size() == 3 * static_cast<Eigen::Index>(m.spec.internal.size()) &&
                m.ic_std.size() == m.ic_mean.size(),
            "checkpoint: inconsistent mixed-layer shapes");
    return m;
  }
  if (kind == "coupling") {
    CouplingLayer c;
    c.idx_cond = j.at("idx_cond").get<std::vector<Eigen::Index>>();
    c.idx_trans = j.at("idx_trans").get<std::vector<Eigen::Index>>();
    c.s_net = net_from_json(j.at("s_net"));
    c.t_net = net_from_json(j.at("t_net"));
    return c;
  }
  throw ConfigError("checkpoint: unknown layer kind '" + kind + "'");
}

// Full flow state as JSON; doubles survive the round trip bit-exactly.
inline json json_from_flow(const FlowStack& flow) {
  json layers = json::array();
  for (const auto& l : flow.layers) layers.push_back(json_from_layer(l));
  return json{{"schema_version", 1}, {"layers", std::move(layers)}};
}

inline FlowStack flow_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != 1)
    throw ConfigError("checkpoint: unsupported schema_version");
  FlowStack f;
  for (const auto& lj : j.at("layers")) f.layers.push_back(layer_from_json(lj));
  f.validate();
  return f;
}

inline void save_checkpoint(const std::string& path, const FlowStack& flow,
                            const Rng* rng = nullptr) {
  json j = json_from_flow(flow);
  if (rng) j["rng"] = rng->serialize();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

inline FlowStack load_checkpoint(const std::string& path, Rng* rng = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("checkpoint parse failure in " + path + ": " + e.what());
  }
  FlowStack f = flow_from_json(j);
  if (rng && j.contains("rng")) rng->deserialize(j.at("rng").get<std::string>());
  return f;
}

}  // namespace bg
