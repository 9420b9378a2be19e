#include "conclab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "conclab/errors.hpp"

namespace conclab {

namespace {

using ConstRowMap = Eigen::Map<const RowMatrix>;

ConstRowMap as_matrix(const SampleEnsemble& e, Eigen::Index t) {
  return ConstRowMap(e.data.row(t).data(), e.shape->rows, e.shape->cols);
}

const MatrixShape& require_shape(const SampleEnsemble& e, const char* what) {
  if (!e.shape) throw ShapeError(std::string(what) + ": matrix ensemble expected");
  return *e.shape;
}

SampleEnsemble scalar_result(const std::vector<const SampleEnsemble*>& inputs, Eigen::Index N,
                             nlohmann::json model) {
  SampleEnsemble out;
  out.data.resize(N, 1);
  out.model = std::move(model);
  out.provenance = combined_provenance(inputs);
  return out;
}

bool disjoint(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  for (auto s : a) {
    if (std::find(b.begin(), b.end(), s) != b.end()) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Observation

Observation Observation::linear(Eigen::VectorXd u) {
  Observation o;
  o.kind = Kind::linear;
  o.lipschitz_constant = u.norm();
  o.u = std::move(u);
  return o;
}

Observation Observation::linear_matrix(Eigen::MatrixXd A) {
  Observation o;
  o.kind = Kind::linear_matrix;
  o.lipschitz_constant = A.norm();
  o.A = std::move(A);
  return o;
}

Observation Observation::norm_of(SpaceKind kind) {
  Observation o;
  o.kind = Kind::norm_of;
  o.norm = kind;
  return o;
}

Observation Observation::distance_to_ball(double radius) {
  if (!(radius >= 0.0)) throw std::out_of_range("distance_to_ball: radius must be >= 0");
  Observation o;
  o.kind = Kind::distance_to_set;
  o.radius = radius;
  return o;
}

Observation Observation::custom(std::string name, double lipschitz,
                                std::function<double(std::span<const double>)> fn) {
  if (!(lipschitz > 0.0)) throw std::out_of_range("custom observation: lipschitz constant must be > 0");
  Observation o;
  o.kind = Kind::custom;
  o.name = std::move(name);
  o.lipschitz_constant = lipschitz;
  o.fn = std::move(fn);
  return o;
}

double Observation::evaluate(std::span<const double> z, const std::optional<MatrixShape>& shape) const {
  Eigen::Map<const Eigen::VectorXd> v(z.data(), static_cast<Eigen::Index>(z.size()));
  switch (kind) {
    case Kind::linear:
      if (u.size() != v.size()) throw ShapeError("linear observation: dimension mismatch");
      return u.dot(v);
    case Kind::linear_matrix: {
      if (!shape || A.rows() != shape->rows || A.cols() != shape->cols) {
        throw ShapeError("linear_matrix observation: shape mismatch");
      }
      ConstRowMap m(z.data(), shape->rows, shape->cols);
      return (A.array() * m.array()).sum();
    }
    case Kind::norm_of:
      switch (norm) {
        case SpaceKind::linf: return v.cwiseAbs().maxCoeff();
        case SpaceKind::euclidean:
        case SpaceKind::frobenius: return v.norm();
        case SpaceKind::spectral:
        case SpaceKind::nuclear:
        case SpaceKind::diag_seminorm: {
          if (!shape) throw ShapeError("matrix norm observation on a vector ensemble");
          const Eigen::MatrixXd m = ConstRowMap(z.data(), shape->rows, shape->cols);
          if (norm == SpaceKind::spectral) return spectral_norm(m);
          if (norm == SpaceKind::nuclear) return nuclear_norm(m);
          return diag_seminorm(m);
        }
      }
      break;
    case Kind::distance_to_set:
      return std::max(0.0, v.norm() - radius);
    case Kind::custom:
      return fn(z);
  }
  throw std::logic_error("unreachable observation kind");
}

std::string Observation::label() const {
  switch (kind) {
    case Kind::linear: return "linear";
    case Kind::linear_matrix: return "linear_matrix";
    case Kind::norm_of: return "norm_" + std::string(to_string(norm));
    case Kind::distance_to_set: return "distance_to_ball";
    case Kind::custom: return name;
  }
  return "observation";
}

nlohmann::json Observation::to_json() const {
  nlohmann::json j{{"label", label()}, {"lipschitz_constant", lipschitz_constant}};
  switch (kind) {
    case Kind::linear:
      j["kind"] = "linear";
      j["u"] = std::vector<double>(u.begin(), u.end());
      break;
    case Kind::linear_matrix:
      j["kind"] = "linear_matrix";
      j["pairing"] = "frobenius";
      j["shape"] = {A.rows(), A.cols()};
      break;
    case Kind::norm_of:
      j["kind"] = "norm_of";
      j["norm"] = to_string(norm);
      break;
    case Kind::distance_to_set:
      j["kind"] = "distance_to_set";
      j["radius"] = radius;
      break;
    case Kind::custom:
      j["kind"] = "custom";
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Alignment

void check_aligned(const std::vector<const SampleEnsemble*>& ensembles) {
  if (ensembles.empty()) return;
  const Eigen::Index N = ensembles.front()->trials();
  const Provenance* first_random = nullptr;
  for (const auto* e : ensembles) {
    if (e->trials() != N) throw AlignmentError("ensembles have different trial counts");
    if (e->provenance.deterministic()) continue;
    if (!first_random) {
      first_random = &e->provenance;
    } else if (e->provenance.master_seed != first_random->master_seed) {
      throw AlignmentError("ensembles come from different master seeds");
    }
  }
  for (std::size_t a = 0; a < ensembles.size(); ++a) {
    for (std::size_t b = a + 1; b < ensembles.size(); ++b) {
      const auto& pa = ensembles[a]->provenance;
      const auto& pb = ensembles[b]->provenance;
      if (pa.deterministic() || pb.deterministic()) continue;
      if (pa.group != 0 && pa.group == pb.group) continue;
      if (pa.streams == pb.streams || disjoint(pa.streams, pb.streams)) continue;
      throw AlignmentError("ensembles share some but not all seed streams");
    }
  }
}

Provenance combined_provenance(const std::vector<const SampleEnsemble*>& ensembles) {
  Provenance out;
  std::set<std::uint32_t> streams;
  std::optional<std::uint64_t> group;
  bool same_group = true;
  for (const auto* e : ensembles) {
    const auto& p = e->provenance;
    if (p.deterministic()) continue;
    out.master_seed = p.master_seed;
    streams.insert(p.streams.begin(), p.streams.end());
    if (!group) {
      group = p.group;
    } else if (*group != p.group) {
      same_group = false;
    }
  }
  out.streams.assign(streams.begin(), streams.end());
  out.group = same_group && group ? *group : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Operations

SampleEnsemble observe(const SampleEnsemble& ens, const Observation& obs) {
  auto out = scalar_result({&ens}, ens.trials(), {{"observation", obs.to_json()}, {"of", ens.model}});
  const Eigen::Index w = ens.width();
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < ens.trials(); ++t) {
    out.data(t, 0) = obs.evaluate(std::span<const double>(ens.data.row(t).data(), w), ens.shape);
  }
  return out;
}

SampleEnsemble hadamard_chain(const std::vector<SampleEnsemble>& factors) {
  if (factors.empty()) throw std::invalid_argument("hadamard_chain needs at least one factor");
  std::vector<const SampleEnsemble*> in;
  for (const auto& f : factors) {
    if (f.width() != factors.front().width()) throw ShapeError("hadamard_chain: dimension mismatch");
    in.push_back(&f);
  }
  check_aligned(in);
  SampleEnsemble out;
  out.data = factors.front().data;
  for (std::size_t k = 1; k < factors.size(); ++k) out.data.array() *= factors[k].data.array();
  nlohmann::json models = nlohmann::json::array();
  for (const auto& f : factors) models.push_back(f.model);
  out.model = {{"hadamard_chain", models}};
  out.provenance = combined_provenance(in);
  out.shape = factors.front().shape;
  return out;
}

SampleEnsemble matrix_chain(const std::vector<SampleEnsemble>& factors) {
  if (factors.empty()) throw std::invalid_argument("matrix_chain needs at least one factor");
  std::vector<const SampleEnsemble*> in;
  for (std::size_t k = 0; k < factors.size(); ++k) {
    require_shape(factors[k], "matrix_chain");
    if (k && factors[k - 1].shape->cols != factors[k].shape->rows) {
      throw ShapeError("matrix_chain: factors are not conformable");
    }
    in.push_back(&factors[k]);
  }
  check_aligned(in);
  if (factors.size() == 1) return factors.front();
  const int rows = factors.front().shape->rows;
  const int cols = factors.back().shape->cols;
  const Eigen::Index N = factors.front().trials();
  SampleEnsemble out;
  out.data.resize(N, static_cast<Eigen::Index>(rows) * cols);
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < N; ++t) {
    Eigen::MatrixXd acc = as_matrix(factors.front(), t);
    for (std::size_t k = 1; k < factors.size(); ++k) acc = acc * as_matrix(factors[k], t);
    Eigen::Map<RowMatrix>(out.data.row(t).data(), rows, cols) = acc;
  }
  nlohmann::json models = nlohmann::json::array();
  for (const auto& f : factors) models.push_back(f.model);
  out.model = {{"matrix_chain", models}};
  out.provenance = combined_provenance(in);
  out.shape = MatrixShape{rows, cols};
  return out;
}

SampleEnsemble transpose(const SampleEnsemble& m) {
  const auto& s = require_shape(m, "transpose");
  SampleEnsemble out;
  out.data.resize(m.trials(), m.width());
  for (Eigen::Index t = 0; t < m.trials(); ++t) {
    Eigen::Map<RowMatrix>(out.data.row(t).data(), s.cols, s.rows) = as_matrix(m, t).transpose();
  }
  out.model = {{"transpose", m.model}};
  out.provenance = m.provenance;
  out.shape = MatrixShape{s.cols, s.rows};
  return out;
}

SampleEnsemble bilinear_form(const SampleEnsemble& x, const Eigen::MatrixXd& A, const SampleEnsemble& y) {
  check_aligned({&x, &y});
  if (x.shape || y.shape) {
    const auto& sx = require_shape(x, "bilinear_form");
    return bilinear_form(x, A, y, Eigen::MatrixXd::Identity(sx.cols, sx.cols));
  }
  if (A.rows() != x.width() || A.cols() != y.width()) throw ShapeError("bilinear_form: A is not conformable");
  auto out = scalar_result({&x, &y}, x.trials(), {{"bilinear_form", {x.model, y.model}}});
  // x^T A y for all trials at once: rowwise dot of X with (Y A^T)
  const RowMatrix ay = y.data * A.transpose();
  out.data.col(0) = x.data.cwiseProduct(ay).rowwise().sum();
  return out;
}

SampleEnsemble bilinear_form(const SampleEnsemble& x, const Eigen::MatrixXd& A, const SampleEnsemble& y,
                             const Eigen::MatrixXd& B) {
  check_aligned({&x, &y});
  const auto& sx = require_shape(x, "bilinear_form");
  const auto& sy = require_shape(y, "bilinear_form");
  if (A.rows() != sy.rows || A.cols() != sx.rows) throw ShapeError("bilinear_form: A is not conformable");
  if (B.rows() != sy.cols || B.cols() != sx.cols) throw ShapeError("bilinear_form: B is not conformable");
  auto out = scalar_result({&x, &y}, x.trials(), {{"bilinear_form", {x.model, y.model}}});
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < x.trials(); ++t) {
    const Eigen::MatrixXd yax = as_matrix(y, t).transpose() * A * as_matrix(x, t);
    out.data(t, 0) = (B.array() * yax.array()).sum();
  }
  return out;
}

SampleEnsemble xdy_action(const SampleEnsemble& x, const SampleEnsemble& d, const SampleEnsemble& y,
                          const Eigen::VectorXd& u) {
  check_aligned({&x, &d, &y});
  const auto& sx = require_shape(x, "xdy_action");
  const auto& sy = require_shape(y, "xdy_action");
  if (sx.cols != sy.cols || d.width() != sx.cols || u.size() != sy.rows) {
    throw ShapeError("xdy_action: dimension mismatch");
  }
  if (u.norm() > 1.0 + 1e-12) throw std::out_of_range("xdy_action: ||u|| must be <= 1");
  SampleEnsemble out;
  out.data.resize(x.trials(), sx.rows);
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < x.trials(); ++t) {
    const Eigen::VectorXd ytu = as_matrix(y, t).transpose() * u;
    const Eigen::VectorXd dyu = d.data.row(t).transpose().cwiseProduct(ytu);
    out.data.row(t) = (as_matrix(x, t) * dyu).transpose();
  }
  out.model = {{"xdy_action", {x.model, d.model, y.model}}};
  out.provenance = combined_provenance({&x, &d, &y});
  return out;
}

PairingResult trace_pairing(const Eigen::MatrixXd& A, const SampleEnsemble& x, const SampleEnsemble& d,
                            const SampleEnsemble& y, PairingMode mode) {
  check_aligned({&x, &d, &y});
  const auto& sx = require_shape(x, "trace_pairing");
  const auto& sy = require_shape(y, "trace_pairing");
  if (sx.cols != sy.cols || d.width() != sx.cols || A.rows() != sy.rows || A.cols() != sx.rows) {
    throw ShapeError("trace_pairing: dimension mismatch");
  }
  PairingResult res;
  const double norm = mode == PairingMode::frobenius ? A.norm() : nuclear_norm(A);
  if (norm > 1.0 + 1e-12) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s norm of A is %.6g > 1", mode == PairingMode::frobenius ? "frobenius" : "nuclear",
                  norm);
    res.warnings.emplace_back(buf);
  }
  res.values = scalar_result({&x, &d, &y}, x.trials(), {{"trace_pairing", {x.model, d.model, y.model}}});
  // tr(A X D Y^T) = sum_i D_i y_i^T A x_i
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < x.trials(); ++t) {
    const Eigen::MatrixXd ax = A * as_matrix(x, t);
    const auto ym = as_matrix(y, t);
    double s = 0.0;
    for (int i = 0; i < sx.cols; ++i) s += d.data(t, i) * ym.col(i).dot(ax.col(i));
    res.values.data(t, 0) = s;
  }
  return res;
}

DiagStat ydax_diag_stat(const SampleEnsemble& x, const SampleEnsemble& y, const Eigen::MatrixXd& A) {
  check_aligned({&x, &y});
  const auto& sx = require_shape(x, "ydax_diag_stat");
  const auto& sy = require_shape(y, "ydax_diag_stat");
  if (sx.cols != sy.cols || A.rows() != sy.rows || A.cols() != sx.rows) {
    throw ShapeError("ydax_diag_stat: dimension mismatch");
  }
  DiagStat st;
  const double f = A.norm();
  st.normalization = f > 1.0 ? 1.0 / f : 1.0;
  const Eigen::MatrixXd An = A * st.normalization;
  st.values = scalar_result({&x, &y}, x.trials(), {{"ydax_diag_stat", {x.model, y.model}}});
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < x.trials(); ++t) {
    const Eigen::MatrixXd ax = An * as_matrix(x, t);
    const auto ym = as_matrix(y, t);
    double s = 0.0;
    for (int i = 0; i < sx.cols; ++i) {
      const double v = ym.col(i).dot(ax.col(i));
      s += v * v;
    }
    st.values.data(t, 0) = std::sqrt(s);
  }
  st.mean = st.values.data.mean();
  return st;
}

void export_scalar_csv(const SampleEnsemble& values, const std::filesystem::path& path,
                       const std::string& statistic) {
  if (values.width() != 1) throw ShapeError("export_scalar_csv: scalar ensemble expected");
  export_csv(values, path, {statistic});
}

}  // namespace conclab
