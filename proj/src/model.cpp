#include "qlpv/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "qlpv/rng.hpp"

namespace qlpv {

using json = nlohmann::ordered_json;

Activation activation_from_string(const std::string& name) {
  if (name == "swish") return Activation::Swish;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation act) {
  return act == Activation::Swish ? "swish" : "tanh";
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

double act_eval(Activation act, double x) {
  switch (act) {
    case Activation::Swish: return x * sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return 0.0;
}

double act_deriv(Activation act, double x) {
  switch (act) {
    case Activation::Swish: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 0.0;
}

double act_deriv2(Activation act, double x) {
  switch (act) {
    case Activation::Swish: {
      const double s = sigmoid(x);
      const double s1 = s * (1.0 - s);
      return s1 * (2.0 + x * (1.0 - 2.0 * s));
    }
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
  }
  return 0.0;
}

int QlpvModel::num_params() const {
  const int n_z = dims.n_x + dims.n_u;
  int n = dims.n_p * dims.n_x * dims.n_x + dims.n_p * dims.n_x * dims.n_u + dims.n_y * dims.n_x;
  n += (dims.n_p - 1) * net.params_per_channel(n_z);
  return n;
}

void QlpvModel::validate() const {
  dims.validate();
  if (static_cast<int>(A.size()) != dims.n_p || static_cast<int>(B.size()) != dims.n_p)
    throw std::invalid_argument("QlpvModel: A/B list length must equal n_p");
  for (const auto& Ai : A)
    if (Ai.rows() != dims.n_x || Ai.cols() != dims.n_x)
      throw std::invalid_argument("QlpvModel: A_i must be n_x x n_x");
  for (const auto& Bi : B)
    if (Bi.rows() != dims.n_x || Bi.cols() != dims.n_u)
      throw std::invalid_argument("QlpvModel: B_i must be n_x x n_u");
  if (C.rows() != dims.n_y || C.cols() != dims.n_x)
    throw std::invalid_argument("QlpvModel: C must be n_y x n_x");
  if (net.channels() != dims.n_p - 1)
    throw std::invalid_argument("QlpvModel: net must have n_p - 1 channels");
  const int n_z = dims.n_x + dims.n_u;
  for (int c = 0; c < net.channels(); ++c) {
    if (net.W1[c].rows() != net.width || net.W1[c].cols() != n_z ||
        net.b1[c].size() != net.width || net.w2[c].size() != net.width)
      throw std::invalid_argument("QlpvModel: inconsistent net layer shapes");
  }
}

namespace {

template <typename Fn>
void for_each_param_block(const QlpvModel& m, Fn&& fn) {
  // Order defines the flat layout and the serialization manifest.
  for (int i = 0; i < m.dims.n_p; ++i) fn("A" + std::to_string(i), m.A[i]);
  for (int i = 0; i < m.dims.n_p; ++i) fn("B" + std::to_string(i), m.B[i]);
  fn("C", m.C);
  for (int c = 0; c < m.net.channels(); ++c) {
    const std::string tag = "net" + std::to_string(c);
    fn(tag + ".W1", m.net.W1[c]);
    fn(tag + ".b1", Eigen::MatrixXd(m.net.b1[c]));
    fn(tag + ".w2", Eigen::MatrixXd(m.net.w2[c]));
    fn(tag + ".b2", Eigen::MatrixXd(Eigen::VectorXd::Constant(1, m.net.b2[c])));
  }
}

void write_rowmajor(const Eigen::MatrixXd& mat, Eigen::VectorXd& theta, int& pos) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c) theta[pos++] = mat(r, c);
}

void read_rowmajor(Eigen::MatrixXd& mat, const Eigen::Ref<const Eigen::VectorXd>& theta, int& pos) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = theta[pos++];
}

}  // namespace

Eigen::VectorXd QlpvModel::flatten() const {
  Eigen::VectorXd theta(num_params());
  int pos = 0;
  for (const auto& Ai : A) write_rowmajor(Ai, theta, pos);
  for (const auto& Bi : B) write_rowmajor(Bi, theta, pos);
  write_rowmajor(C, theta, pos);
  for (int c = 0; c < net.channels(); ++c) {
    write_rowmajor(net.W1[c], theta, pos);
    for (int k = 0; k < net.width; ++k) theta[pos++] = net.b1[c][k];
    for (int k = 0; k < net.width; ++k) theta[pos++] = net.w2[c][k];
    theta[pos++] = net.b2[c];
  }
  return theta;
}

void QlpvModel::set_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != num_params())
    throw std::invalid_argument("set_params: parameter vector has wrong length");
  int pos = 0;
  for (auto& Ai : A) read_rowmajor(Ai, theta, pos);
  for (auto& Bi : B) read_rowmajor(Bi, theta, pos);
  read_rowmajor(C, theta, pos);
  for (int c = 0; c < net.channels(); ++c) {
    read_rowmajor(net.W1[c], theta, pos);
    for (int k = 0; k < net.width; ++k) net.b1[c][k] = theta[pos++];
    for (int k = 0; k < net.width; ++k) net.w2[c][k] = theta[pos++];
    net.b2[c] = theta[pos++];
  }
}

QlpvModel QlpvModel::zeros(const Dims& dims, int width, Activation act) {
  dims.validate();
  if (width <= 0) throw std::invalid_argument("zeros: width must be positive");
  QlpvModel m;
  m.dims = dims;
  m.A.assign(dims.n_p, Eigen::MatrixXd::Zero(dims.n_x, dims.n_x));
  m.B.assign(dims.n_p, Eigen::MatrixXd::Zero(dims.n_x, dims.n_u));
  m.C = Eigen::MatrixXd::Zero(dims.n_y, dims.n_x);
  m.net.width = width;
  m.net.activation = act;
  const int n_z = dims.n_x + dims.n_u;
  m.net.W1.assign(dims.n_p - 1, Eigen::MatrixXd::Zero(width, n_z));
  m.net.b1.assign(dims.n_p - 1, Eigen::VectorXd::Zero(width));
  m.net.w2.assign(dims.n_p - 1, Eigen::VectorXd::Zero(width));
  m.net.b2.assign(dims.n_p - 1, 0.0);
  return m;
}

QlpvModel init_model(const Dims& dims, int width, Activation act, uint64_t seed,
                     double spectral_radius, double coef_scale, double net_scale) {
  QlpvModel m = QlpvModel::zeros(dims, width, act);
  Rng rng(seed);
  for (auto& Ai : m.A) {
    for (Eigen::Index r = 0; r < Ai.rows(); ++r)
      for (Eigen::Index c = 0; c < Ai.cols(); ++c) Ai(r, c) = rng.uniform(-1.0, 1.0);
    const double rho = Ai.eigenvalues().cwiseAbs().maxCoeff();
    if (rho > 1e-12) Ai *= spectral_radius / rho;
  }
  for (auto& Bi : m.B)
    for (Eigen::Index r = 0; r < Bi.rows(); ++r)
      for (Eigen::Index c = 0; c < Bi.cols(); ++c) Bi(r, c) = rng.uniform(-coef_scale, coef_scale);
  for (Eigen::Index r = 0; r < m.C.rows(); ++r)
    for (Eigen::Index c = 0; c < m.C.cols(); ++c) m.C(r, c) = rng.uniform(-coef_scale, coef_scale);
  for (int ch = 0; ch < m.net.channels(); ++ch) {
    for (Eigen::Index r = 0; r < m.net.W1[ch].rows(); ++r)
      for (Eigen::Index c = 0; c < m.net.W1[ch].cols(); ++c)
        m.net.W1[ch](r, c) = rng.uniform(-net_scale, net_scale);
    for (int k = 0; k < width; ++k) m.net.b1[ch][k] = rng.uniform(-net_scale, net_scale);
    for (int k = 0; k < width; ++k) m.net.w2[ch][k] = rng.uniform(-net_scale, net_scale);
    m.net.b2[ch] = rng.uniform(-net_scale, net_scale);
  }
  return m;
}

Eigen::VectorXd scheduling_logits(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (x.size() != model.dims.n_x || u.size() != model.dims.n_u)
    throw std::invalid_argument("scheduling_logits: dimension mismatch");
  Eigen::VectorXd l = Eigen::VectorXd::Zero(model.dims.n_p);
  if (model.net.channels() == 0) return l;
  Eigen::VectorXd z(x.size() + u.size());
  z << x, u;
  for (int c = 0; c < model.net.channels(); ++c) {
    const Eigen::VectorXd xi = model.net.W1[c] * z + model.net.b1[c];
    double acc = model.net.b2[c];
    for (int k = 0; k < model.net.width; ++k)
      acc += model.net.w2[c][k] * act_eval(model.net.activation, xi[k]);
    l[c + 1] = acc;
  }
  return l;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

void scheduling_logit_jacobians(const QlpvModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& u, Eigen::MatrixXd* Hx,
                                Eigen::MatrixXd* Hu) {
  const int n_x = model.dims.n_x, n_u = model.dims.n_u, n_p = model.dims.n_p;
  if (Hx) *Hx = Eigen::MatrixXd::Zero(n_p, n_x);
  if (Hu) *Hu = Eigen::MatrixXd::Zero(n_p, n_u);
  if (model.net.channels() == 0) return;
  Eigen::VectorXd z(n_x + n_u);
  z << x, u;
  for (int c = 0; c < model.net.channels(); ++c) {
    const Eigen::VectorXd xi = model.net.W1[c] * z + model.net.b1[c];
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_x + n_u);
    for (int k = 0; k < model.net.width; ++k)
      g += model.net.w2[c][k] * act_deriv(model.net.activation, xi[k]) * model.net.W1[c].row(k).transpose();
    if (Hx) Hx->row(c + 1) = g.head(n_x).transpose();
    if (Hu) Hu->row(c + 1) = g.tail(n_u).transpose();
  }
}

Eigen::MatrixXd softmax_jacobian(const Eigen::Ref<const Eigen::VectorXd>& p) {
  return Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose();
}

void QlpvModel::save(const std::string& path) const {
  validate();
  json j;
  j["format"] = "qlpv-model";
  j["version"] = 1;
  j["dims"] = {{"n_x", dims.n_x}, {"n_u", dims.n_u}, {"n_y", dims.n_y},
               {"n_p", dims.n_p}, {"T", dims.T}};
  j["net"] = {{"width", net.width}, {"activation", to_string(net.activation)}};
  j["layout"] = "row-major";
  std::vector<std::string> order;
  json fields;
  for_each_param_block(*this, [&](const std::string& name, const Eigen::MatrixXd& mat) {
    order.push_back(name);
    json arr = json::array();
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) arr.push_back(mat(r, c));
    fields[name] = {{"rows", mat.rows()}, {"cols", mat.cols()}, {"data", arr}};
  });
  j["field_order"] = order;
  j["fields"] = fields;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
  out << j.dump(1) << "\n";
}

QlpvModel QlpvModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  json j = json::parse(in);
  if (j.at("format") != "qlpv-model") throw std::runtime_error("not a qlpv-model file: " + path);
  Dims dims;
  dims.n_x = j.at("dims").at("n_x");
  dims.n_u = j.at("dims").at("n_u");
  dims.n_y = j.at("dims").at("n_y");
  dims.n_p = j.at("dims").at("n_p");
  dims.T = j.at("dims").at("T");
  QlpvModel m = QlpvModel::zeros(dims, j.at("net").at("width"),
                                 activation_from_string(j.at("net").at("activation")));
  const auto& fields = j.at("fields");
  auto read_into = [&](const std::string& name, Eigen::MatrixXd& mat) {
    const auto& f = fields.at(name);
    if (f.at("rows") != mat.rows() || f.at("cols") != mat.cols())
      throw std::runtime_error("model field shape mismatch: " + name);
    const auto& data = f.at("data");
    int idx = 0;
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = data.at(idx++).get<double>();
  };
  for (int i = 0; i < dims.n_p; ++i) read_into("A" + std::to_string(i), m.A[i]);
  for (int i = 0; i < dims.n_p; ++i) read_into("B" + std::to_string(i), m.B[i]);
  read_into("C", m.C);
  for (int c = 0; c < m.net.channels(); ++c) {
    const std::string tag = "net" + std::to_string(c);
    read_into(tag + ".W1", m.net.W1[c]);
    Eigen::MatrixXd tmp(m.net.width, 1);
    read_into(tag + ".b1", tmp);
    m.net.b1[c] = tmp.col(0);
    read_into(tag + ".w2", tmp);
    m.net.w2[c] = tmp.col(0);
    Eigen::MatrixXd one(1, 1);
    read_into(tag + ".b2", one);
    m.net.b2[c] = one(0, 0);
  }
  m.validate();
  return m;
}

}  // namespace qlpv
