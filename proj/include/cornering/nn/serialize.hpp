#pragma once

// JSON persistence for the networks. Matrices are stored as flattened
// row-major arrays next to their dimensions.

#include "json.hpp"

#include "cornering/error.hpp"
#include "cornering/nn/networks.hpp"

namespace cornering::nn {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

inline void matrix_from_json(const json& j, Matrix& m) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (rows != m.rows() || cols != m.cols() ||
      flat.size() != static_cast<std::size_t>(rows * cols)) {
    throw ParseError("stored matrix shape does not match the architecture");
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index jx = 0; jx < cols; ++jx) {
      m(i, jx) = flat[static_cast<std::size_t>(i * cols + jx)];
    }
  }
}

inline void vector_from_json(const json& j, Vector& v) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(v.size())) {
    throw ParseError("stored vector length does not match the architecture");
  }
  for (std::size_t i = 0; i < flat.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = flat[i];
  }
}

inline json bounded_to_json(const BoundedOutput& b) {
  return json{{"z_mean", std::vector<double>(b.z_mean.data(),
                                             b.z_mean.data() + b.z_mean.size())},
              {"z_range", b.z_range}};
}

inline BoundedOutput bounded_from_json(const json& j) {
  BoundedOutput b;
  const auto zm = j.at("z_mean").get<std::vector<double>>();
  b.z_mean = Eigen::Map<const Vector>(zm.data(), static_cast<Eigen::Index>(zm.size()));
  b.z_range = j.at("z_range").get<double>();
  b.validate();
  return b;
}

inline json dense_to_json(const DenseLayer& d) {
  return json{{"in", d.in_size()},
              {"out", d.out_size()},
              {"weights", matrix_to_json(d.weights())},
              {"biases", std::vector<double>(d.biases().data(),
                                             d.biases().data() + d.biases().size())}};
}

inline void dense_from_json(const json& j, DenseLayer& d) {
  matrix_from_json(j.at("weights"), d.weights());
  vector_from_json(j.at("biases"), d.biases());
}

inline json to_json(const Mlp& net) {
  const MlpConfig& c = net.config();
  json layers = json::array();
  for (const auto& d : net.dense_layers()) layers.push_back(dense_to_json(d));
  return json{{"kind", "mlp"},
              {"inputs", c.inputs},
              {"hidden", c.hidden},
              {"outputs", c.outputs},
              {"hidden_activation", "tanh"},
              {"bounded", bounded_to_json(c.bounded)},
              {"seed", c.seed},
              {"layers", layers}};
}

inline Mlp mlp_from_json(const json& j) {
  if (j.at("kind") != "mlp") throw ParseError("model kind is not 'mlp'");
  MlpConfig c;
  c.inputs = j.at("inputs").get<Eigen::Index>();
  c.hidden = j.at("hidden").get<std::vector<Eigen::Index>>();
  c.outputs = j.at("outputs").get<Eigen::Index>();
  c.bounded = bounded_from_json(j.at("bounded"));
  c.seed = j.at("seed").get<std::uint64_t>();
  Mlp net(c);
  const json& layers = j.at("layers");
  if (layers.size() != net.dense_layers().size()) {
    throw ParseError("layer count does not match the architecture");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    dense_from_json(layers[k], net.dense_layers()[k]);
  }
  return net;
}

inline json lstm_cell_to_json(const LstmCell& cell) {
  return json{{"input_weights", matrix_to_json(cell.input_weights())},
              {"recurrent_weights", matrix_to_json(cell.recurrent_weights())},
              {"bias", std::vector<double>(cell.bias().data(),
                                           cell.bias().data() + cell.bias().size())}};
}

inline void lstm_cell_from_json(const json& j, LstmCell& cell) {
  matrix_from_json(j.at("input_weights"), cell.input_weights());
  matrix_from_json(j.at("recurrent_weights"), cell.recurrent_weights());
  vector_from_json(j.at("bias"), cell.bias());
}

inline json to_json(const SequenceRegressor& net) {
  const SequenceRegressorConfig& c = net.config();
  return json{{"kind", "bilstm_regressor"},
              {"inputs", c.inputs},
              {"lstm_hidden", c.lstm_hidden},
              {"head_hidden", c.head_hidden},
              {"outputs", c.outputs},
              {"bounded", bounded_to_json(c.bounded)},
              {"seed", c.seed},
              {"lstm_forward", lstm_cell_to_json(net.encoder().forward_cell())},
              {"lstm_backward", lstm_cell_to_json(net.encoder().backward_cell())},
              {"hidden", dense_to_json(net.hidden_layer())},
              {"output", dense_to_json(net.output_layer())}};
}

inline SequenceRegressor regressor_from_json(const json& j) {
  if (j.at("kind") != "bilstm_regressor") {
    throw ParseError("model kind is not 'bilstm_regressor'");
  }
  SequenceRegressorConfig c;
  c.inputs = j.at("inputs").get<Eigen::Index>();
  c.lstm_hidden = j.at("lstm_hidden").get<Eigen::Index>();
  c.head_hidden = j.at("head_hidden").get<Eigen::Index>();
  c.outputs = j.at("outputs").get<Eigen::Index>();
  c.bounded = bounded_from_json(j.at("bounded"));
  c.seed = j.at("seed").get<std::uint64_t>();
  SequenceRegressor net(c);
  lstm_cell_from_json(j.at("lstm_forward"), net.encoder().forward_cell());
  lstm_cell_from_json(j.at("lstm_backward"), net.encoder().backward_cell());
  dense_from_json(j.at("hidden"), net.hidden_layer());
  dense_from_json(j.at("output"), net.output_layer());
  return net;
}

}  // namespace cornering::nn
