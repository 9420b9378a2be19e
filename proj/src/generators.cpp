#include "conclab/generators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "conclab/errors.hpp"

namespace conclab {

namespace {

template <class Enum>
struct Names {
  Enum value;
  std::string_view name;
};

constexpr Names<VectorKind> kVectorKinds[] = {
    {VectorKind::gaussian, "gaussian"}, {VectorKind::sphere, "sphere"},
    {VectorKind::ball, "ball"},         {VectorKind::cube, "cube"},
    {VectorKind::laplace, "laplace"},   {VectorKind::lq_ball, "lq_ball"},
    {VectorKind::replicated, "replicated"}, {VectorKind::zero, "zero"},
    {VectorKind::concat, "concat"},
};

constexpr Names<ScalarFn> kScalarFns[] = {
    {ScalarFn::tanh, "tanh"}, {ScalarFn::sin, "sin"},   {ScalarFn::abs, "abs"},
    {ScalarFn::relu, "relu"}, {ScalarFn::clip, "clip"},
};

constexpr Names<Coupling> kCouplings[] = {
    {Coupling::none, "none"},
    {Coupling::independent, "independent"},
    {Coupling::identical, "identical"},
    {Coupling::gaussian_mix, "gaussian_mix"},
};

template <class Enum, std::size_t N>
Enum parse_name(const Names<Enum> (&table)[N], std::string_view name, const char* what) {
  for (const auto& e : table) {
    if (e.name == name) return e.value;
  }
  throw std::domain_error(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

template <class Enum, std::size_t N>
std::string_view name_of(const Names<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw std::domain_error("unnamed enum value");
}

void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                  const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
    }
  }
}

void draw_base(const VectorModel& model, Engine& eng, std::span<double> out) {
  const int p = model.dim;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (model.kind) {
    case VectorKind::gaussian:
      for (auto& x : out) x = normal(eng);
      return;
    case VectorKind::sphere:
    case VectorKind::ball: {
      double sq = 0.0;
      do {
        sq = 0.0;
        for (auto& x : out) {
          x = normal(eng);
          sq += x * x;
        }
      } while (sq == 0.0);
      double radius = std::sqrt(static_cast<double>(p));
      if (model.kind == VectorKind::ball) radius *= std::pow(unif(eng), 1.0 / p);
      const double f = radius / std::sqrt(sq);
      for (auto& x : out) x *= f;
      return;
    }
    case VectorKind::cube: {
      const double side = std::sqrt(static_cast<double>(p));
      for (auto& x : out) x = side * unif(eng);
      return;
    }
    case VectorKind::laplace: {
      std::exponential_distribution<double> expo(1.0);
      std::bernoulli_distribution sign(0.5);
      for (auto& x : out) {
        const double e = expo(eng);
        x = sign(eng) ? e : -e;
      }
      return;
    }
    case VectorKind::lq_ball: {
      // g_i with density proportional to exp(-|x|^q) and W ~ Exp(1):
      // g / (||g||_q^q + W)^{1/q} is uniform on the unit l_q ball.
      const double q = model.q;
      std::gamma_distribution<double> gam(1.0 / q, 1.0);
      std::exponential_distribution<double> expo(1.0);
      std::bernoulli_distribution sign(0.5);
      double acc = 0.0;
      for (auto& x : out) {
        const double g = gam(eng);  // |x|^q
        acc += g;
        const double mag = std::pow(g, 1.0 / q);
        x = sign(eng) ? mag : -mag;
      }
      acc += expo(eng);
      const double f = std::pow(acc, -1.0 / q);
      for (auto& x : out) x *= f;
      return;
    }
    case VectorKind::replicated: {
      const double v = normal(eng);
      for (auto& x : out) x = v;
      return;
    }
    case VectorKind::zero:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case VectorKind::concat:
      break;
  }
  throw std::logic_error("draw_base: concat handled by caller");
}

std::uint64_t matrix_group(std::uint64_t master, std::uint32_t stream) {
  return derive_seed(master, stream, ~0ULL, 0x6d6174726978ULL) | 1ULL;
}

}  // namespace

VectorKind parse_vector_kind(std::string_view name) { return parse_name(kVectorKinds, name, "vector kind"); }
std::string_view to_string(VectorKind kind) { return name_of(kVectorKinds, kind); }
ScalarFn parse_scalar_fn(std::string_view name) { return parse_name(kScalarFns, name, "scalar function"); }
std::string_view to_string(ScalarFn fn) { return name_of(kScalarFns, fn); }
Coupling parse_coupling(std::string_view name) { return parse_name(kCouplings, name, "coupling"); }
std::string_view to_string(Coupling c) { return name_of(kCouplings, c); }

double apply_scalar_fn(ScalarFn fn, double x) {
  switch (fn) {
    case ScalarFn::tanh: return std::tanh(x);
    case ScalarFn::sin: return std::sin(x);
    case ScalarFn::abs: return std::abs(x);
    case ScalarFn::relu: return x > 0.0 ? x : 0.0;
    case ScalarFn::clip: return std::clamp(x, -1.0, 1.0);
  }
  throw std::domain_error("unknown scalar function");
}

// ---------------------------------------------------------------------------
// LipschitzTransform

LipschitzTransform LipschitzTransform::affine(Eigen::MatrixXd A, Eigen::VectorXd b) {
  if (b.size() != A.rows()) throw ShapeError("affine transform: b must have A.rows() entries");
  const double lip = spectral_norm(A);
  return LipschitzTransform(Affine{std::move(A), std::move(b)}, lip);
}

LipschitzTransform LipschitzTransform::coordinatewise(ScalarFn fn) {
  return LipschitzTransform(Coordinatewise{fn}, 1.0);
}

LipschitzTransform LipschitzTransform::scaling(double lambda) {
  if (!std::isfinite(lambda)) throw std::out_of_range("scaling transform: lambda must be finite");
  return LipschitzTransform(Scaling{lambda}, std::abs(lambda));
}

int LipschitzTransform::output_dim(int input_dim) const {
  if (const auto* a = std::get_if<Affine>(&map_)) {
    if (a->A.cols() != input_dim) throw ShapeError("affine transform: A.cols() != input dimension");
    return static_cast<int>(a->A.rows());
  }
  return input_dim;
}

void LipschitzTransform::apply(std::span<const double> in, std::span<double> out) const {
  if (const auto* a = std::get_if<Affine>(&map_)) {
    Eigen::Map<const Eigen::VectorXd> x(in.data(), static_cast<Eigen::Index>(in.size()));
    Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out.size()));
    y.noalias() = a->A * x;
    y += a->b;
    return;
  }
  if (const auto* c = std::get_if<Coordinatewise>(&map_)) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = apply_scalar_fn(c->fn, in[i]);
    return;
  }
  const double lambda = std::get<Scaling>(map_).lambda;
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = lambda * in[i];
}

nlohmann::json LipschitzTransform::to_json() const {
  if (const auto* a = std::get_if<Affine>(&map_)) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < a->A.rows(); ++i) {
      rows.push_back(std::vector<double>(a->A.row(i).begin(), a->A.row(i).end()));
    }
    return {{"kind", "affine"},
            {"A", rows},
            {"b", std::vector<double>(a->b.begin(), a->b.end())},
            {"lipschitz_constant", lipschitz_}};
  }
  if (const auto* c = std::get_if<Coordinatewise>(&map_)) {
    return {{"kind", "coordinatewise"}, {"fn", to_string(c->fn)}, {"lipschitz_constant", lipschitz_}};
  }
  return {{"kind", "scaling"},
          {"lambda", std::get<Scaling>(map_).lambda},
          {"lipschitz_constant", lipschitz_}};
}

LipschitzTransform LipschitzTransform::from_json(const nlohmann::json& j) {
  require_keys(j, {"kind", "A", "b", "fn", "lambda", "lipschitz_constant"}, "transform");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "affine") {
    const auto& rows = j.at("A");
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd A(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(rows.at(i).size()) != c) throw ConfigError("ragged affine matrix");
      for (Eigen::Index k = 0; k < c; ++k) A(i, k) = rows.at(i).at(k).get<double>();
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
    if (j.contains("b")) {
      const auto v = j.at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != r) throw ConfigError("affine b has wrong length");
      b = Eigen::Map<const Eigen::VectorXd>(v.data(), r);
    }
    return affine(std::move(A), std::move(b));
  }
  if (kind == "coordinatewise") return coordinatewise(parse_scalar_fn(j.at("fn").get<std::string>()));
  if (kind == "scaling") return scaling(j.at("lambda").get<double>());
  throw ConfigError("unknown transform kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// VectorModel

VectorModel VectorModel::of(VectorKind kind, int dim) {
  VectorModel m;
  m.kind = kind;
  m.dim = dim;
  m.validate();
  return m;
}

VectorModel VectorModel::lq_ball(int dim, double q) {
  VectorModel m;
  m.kind = VectorKind::lq_ball;
  m.dim = dim;
  m.q = q;
  m.validate();
  return m;
}

VectorModel VectorModel::with_transform(LipschitzTransform t) const {
  VectorModel m = *this;
  m.transform = std::move(t);
  m.validate();
  return m;
}

int VectorModel::base_dim() const {
  if (kind == VectorKind::concat) {
    int d = 0;
    for (const auto& p : parts) d += p.output_dim();
    return d;
  }
  return dim;
}

int VectorModel::output_dim() const {
  return transform ? transform->output_dim(base_dim()) : base_dim();
}

ConcentrationProfile VectorModel::declared_profile() const {
  std::optional<ConcentrationProfile> prof;
  const double p = dim;
  switch (kind) {
    case VectorKind::gaussian:
    case VectorKind::sphere:
    case VectorKind::ball:
    case VectorKind::cube:
    case VectorKind::zero:
      prof.emplace(std::vector<Regime>{{2.0, 1.0}});
      break;
    case VectorKind::laplace:
      prof.emplace(std::vector<Regime>{{1.0, 1.0}});
      break;
    case VectorKind::lq_ball:
      prof.emplace(std::vector<Regime>{{q, std::pow(p, -1.0 / q)}});
      break;
    case VectorKind::replicated:
      prof.emplace(std::vector<Regime>{{2.0, std::sqrt(p)}});
      break;
    case VectorKind::concat:
      prof = parts.front().declared_profile();
      for (std::size_t i = 1; i < parts.size(); ++i) prof = prof->merged_with(parts[i].declared_profile());
      break;
  }
  if (transform) {
    return prof->scaled(std::max(transform->lipschitz_constant(), std::numeric_limits<double>::min()));
  }
  return *prof;
}

void VectorModel::validate() const {
  if (kind == VectorKind::concat) {
    if (parts.empty()) throw std::invalid_argument("concat model needs at least one part");
    for (const auto& p : parts) p.validate();
  } else if (dim < 1) {
    throw std::out_of_range("vector model dimension must be >= 1");
  }
  if (kind == VectorKind::lq_ball && !(q > 0.0)) throw std::out_of_range("lq_ball needs q > 0");
  if (transform) transform->output_dim(base_dim());
}

nlohmann::json VectorModel::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (kind == VectorKind::concat) {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : parts) ps.push_back(p.to_json());
    j["parts"] = ps;
  } else {
    j["dim"] = dim;
  }
  if (kind == VectorKind::lq_ball) j["q"] = q;
  if (transform) j["transform"] = transform->to_json();
  return j;
}

VectorModel VectorModel::from_json(const nlohmann::json& j) {
  require_keys(j, {"kind", "dim", "q", "transform", "parts"}, "model");
  VectorModel m;
  m.kind = parse_vector_kind(j.at("kind").get<std::string>());
  if (m.kind == VectorKind::concat) {
    for (const auto& p : j.at("parts")) m.parts.push_back(from_json(p));
    m.dim = m.base_dim();
  } else {
    m.dim = j.at("dim").get<int>();
  }
  if (j.contains("q")) m.q = j.at("q").get<double>();
  if (j.contains("transform")) m.transform = LipschitzTransform::from_json(j.at("transform"));
  m.validate();
  return m;
}

VectorModel concat(const std::vector<VectorModel>& models) {
  if (models.empty()) throw std::invalid_argument("concat needs at least one model");
  if (models.size() == 1) return models.front();
  VectorModel m;
  m.kind = VectorKind::concat;
  m.parts = models;
  m.dim = m.base_dim();
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Provenance and ensembles

nlohmann::json Provenance::to_json() const {
  return {{"master_seed", master_seed}, {"streams", streams}, {"group", group}, {"rule", rule}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
  require_keys(j, {"master_seed", "streams", "group", "rule"}, "provenance");
  Provenance p;
  p.master_seed = j.at("master_seed").get<std::uint64_t>();
  p.streams = j.at("streams").get<std::vector<std::uint32_t>>();
  p.group = j.value("group", std::uint64_t{0});
  p.rule = j.value("rule", std::string(kSeedRule));
  return p;
}

Eigen::MatrixXd SampleEnsemble::matrix(Eigen::Index trial) const {
  if (!shape) throw ShapeError("ensemble does not hold matrix draws");
  Eigen::MatrixXd m(shape->rows, shape->cols);
  for (int r = 0; r < shape->rows; ++r) {
    for (int c = 0; c < shape->cols; ++c) m(r, c) = data(trial, r * shape->cols + c);
  }
  return m;
}

SampleEnsemble SampleEnsemble::constant(Eigen::Index trials, const Eigen::VectorXd& row) {
  if (trials < 1) throw std::out_of_range("ensemble needs at least one trial");
  SampleEnsemble e;
  e.data = row.transpose().replicate(trials, 1);
  e.model = {{"kind", "constant"}, {"dim", row.size()}};
  return e;
}

SampleEnsemble SampleEnsemble::constant_matrix(Eigen::Index trials, const Eigen::MatrixXd& m) {
  if (trials < 1) throw std::out_of_range("ensemble needs at least one trial");
  SampleEnsemble e;
  e.data.resize(trials, m.size());
  for (Eigen::Index t = 0; t < trials; ++t) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) e.data(t, r * m.cols() + c) = m(r, c);
    }
  }
  e.model = {{"kind", "constant_matrix"}, {"rows", m.rows()}, {"cols", m.cols()}};
  e.shape = MatrixShape{static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  return e;
}

void draw_vector(const VectorModel& model, std::uint64_t master_seed, std::uint32_t stream,
                 std::uint64_t trial, std::uint64_t column, std::span<double> out) {
  if (static_cast<int>(out.size()) != model.output_dim()) {
    throw ShapeError("draw_vector: output span has the wrong size");
  }
  std::vector<double> base;
  std::span<double> target = out;
  if (model.transform) {
    base.resize(model.base_dim());
    target = base;
  }
  if (model.kind == VectorKind::concat) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < model.parts.size(); ++k) {
      const auto& part = model.parts[k];
      const std::size_t w = part.output_dim();
      // each part owns its own engine: the parts are independent
      std::vector<double> buf(w);
      draw_vector(part, derive_seed(master_seed, stream, trial, column, k + 1), 0, 0, 0, buf);
      std::copy(buf.begin(), buf.end(), target.begin() + offset);
      offset += w;
    }
  } else {
    Engine eng = make_engine(master_seed, stream, trial, column);
    draw_base(model, eng, target);
  }
  if (model.transform) model.transform->apply(base, out);
}

SampleEnsemble sample(const VectorModel& model, Eigen::Index N, std::uint64_t master_seed,
                      std::uint32_t stream) {
  if (N < 1) throw std::out_of_range("sample: N must be >= 1");
  model.validate();
  SampleEnsemble e;
  const int w = model.output_dim();
  e.data.resize(N, w);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < N; ++i) {
    draw_vector(model, master_seed, stream, static_cast<std::uint64_t>(i), 0,
                std::span<double>(e.data.data() + i * w, w));
  }
  e.model = model.to_json();
  e.provenance.master_seed = master_seed;
  e.provenance.streams = {stream};
  return e;
}

// ---------------------------------------------------------------------------
// Matrix models

MatrixModel MatrixModel::iid(int p, int n, const VectorModel& column, Coupling coupling) {
  MatrixModel m;
  m.p = p;
  m.n = n;
  m.columns = {column};
  m.coupling = coupling;
  m.validate();
  return m;
}

const VectorModel& MatrixModel::column(int i) const {
  return columns.size() == 1 ? columns.front() : columns.at(static_cast<std::size_t>(i));
}

void MatrixModel::validate() const {
  if (p < 1 || n < 1) throw std::out_of_range("matrix model needs p, n >= 1");
  if (columns.size() != 1 && columns.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("matrix model needs one column model or n of them");
  }
  for (const auto& c : columns) {
    c.validate();
    if (c.output_dim() != p) throw ShapeError("column model dimension differs from p");
  }
}

nlohmann::json MatrixModel::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) cols.push_back(c.to_json());
  return {{"p", p}, {"n", n}, {"columns", cols}, {"coupling", to_string(coupling)}};
}

MatrixModel MatrixModel::from_json(const nlohmann::json& j) {
  require_keys(j, {"p", "n", "columns", "coupling"}, "matrix model");
  MatrixModel m;
  m.p = j.at("p").get<int>();
  m.n = j.at("n").get<int>();
  for (const auto& c : j.at("columns")) m.columns.push_back(VectorModel::from_json(c));
  if (j.contains("coupling")) m.coupling = parse_coupling(j.at("coupling").get<std::string>());
  m.validate();
  return m;
}

void draw_matrix(const MatrixModel& model, std::uint64_t master_seed, std::uint32_t stream,
                 std::uint64_t trial, Eigen::MatrixXd& x, Eigen::MatrixXd* y) {
  x.resize(model.p, model.n);
  const bool coupled = model.coupling != Coupling::none && y != nullptr;
  if (coupled) y->resize(model.p, model.n);
  for (int i = 0; i < model.n; ++i) {
    draw_vector(model.column(i), master_seed, stream, trial, static_cast<std::uint64_t>(i),
                std::span<double>(x.col(i).data(), model.p));
    if (!coupled) continue;
    auto yc = std::span<double>(y->col(i).data(), model.p);
    switch (model.coupling) {
      case Coupling::independent:
        draw_vector(model.column(i), master_seed, stream + 1, trial, static_cast<std::uint64_t>(i), yc);
        break;
      case Coupling::identical:
        y->col(i) = x.col(i);
        break;
      case Coupling::gaussian_mix: {
        Engine eng = make_engine(master_seed, stream + 1, trial, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> g;
        for (int r = 0; r < model.p; ++r) yc[r] = (x(r, i) + g(eng)) / std::sqrt(2.0);
        break;
      }
      case Coupling::none:
        break;
    }
  }
}

MatrixDraws sample_matrix(const MatrixModel& model, Eigen::Index N, std::uint64_t master_seed,
                          std::uint32_t stream) {
  if (N < 1) throw std::out_of_range("sample_matrix: N must be >= 1");
  model.validate();
  const bool coupled = model.coupling != Coupling::none;
  const Eigen::Index w = static_cast<Eigen::Index>(model.p) * model.n;
  MatrixDraws out;
  out.x.data.resize(N, w);
  if (coupled) out.y.emplace().data.resize(N, w);
#pragma omp parallel for schedule(static)
  for (Eigen::Index t = 0; t < N; ++t) {
    Eigen::MatrixXd x, y;
    draw_matrix(model, master_seed, stream, static_cast<std::uint64_t>(t), x, coupled ? &y : nullptr);
    // row-major flattening of each draw
    Eigen::Map<RowMatrix>(out.x.data.row(t).data(), model.p, model.n) = x;
    if (coupled) Eigen::Map<RowMatrix>(out.y->data.row(t).data(), model.p, model.n) = y;
  }
  const std::uint64_t group = matrix_group(master_seed, stream);
  const nlohmann::json desc = model.to_json();
  auto finish = [&](SampleEnsemble& e, std::vector<std::uint32_t> streams, const char* side) {
    e.model = {{"matrix_model", desc}, {"side", side}};
    e.provenance.master_seed = master_seed;
    e.provenance.streams = std::move(streams);
    e.provenance.group = group;
    e.shape = MatrixShape{model.p, model.n};
  };
  finish(out.x, {stream}, "x");
  if (coupled) {
    std::vector<std::uint32_t> ys;
    switch (model.coupling) {
      case Coupling::independent: ys = {stream + 1}; break;
      case Coupling::identical: ys = {stream}; break;
      case Coupling::gaussian_mix: ys = {stream, stream + 1}; break;
      case Coupling::none: break;
    }
    finish(*out.y, ys, "y");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'C', 'L', 'A', 'B', 'E', 'N', 'S', '1'};

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

}  // namespace

void save_ensemble(const SampleEnsemble& ens, const std::filesystem::path& path) {
  nlohmann::json header{{"format", "conclab-ensemble"},
                        {"version", 1},
                        {"model", ens.model},
                        {"provenance", ens.provenance.to_json()},
                        {"trials", ens.trials()},
                        {"width", ens.width()},
                        {"endianness", "little"}};
  if (ens.shape) header["shape"] = {{"rows", ens.shape->rows}, {"cols", ens.shape->cols}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < ens.data.size(); ++i) {
    write_u64(os, std::bit_cast<std::uint64_t>(ens.data.data()[i]));
  }
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

SampleEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not an ensemble container");
  }
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  if (header.at("endianness") != "little") throw std::runtime_error("unsupported endianness");
  SampleEnsemble e;
  e.model = header.at("model");
  e.provenance = Provenance::from_json(header.at("provenance"));
  if (header.contains("shape")) {
    e.shape = MatrixShape{header["shape"].at("rows").get<int>(), header["shape"].at("cols").get<int>()};
  }
  e.data.resize(header.at("trials").get<Eigen::Index>(), header.at("width").get<Eigen::Index>());
  for (Eigen::Index i = 0; i < e.data.size(); ++i) {
    e.data.data()[i] = std::bit_cast<double>(read_u64(is));
  }
  if (!is) throw std::runtime_error("truncated ensemble container '" + path.string() + "'");
  return e;
}

void export_csv(const SampleEnsemble& ens, const std::filesystem::path& path,
                const std::vector<std::string>& column_names) {
  if (!column_names.empty() && static_cast<Eigen::Index>(column_names.size()) != ens.width()) {
    throw ShapeError("export_csv: one column name per column required");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (Eigen::Index c = 0; c < ens.width(); ++c) {
    if (c) os << ',';
    if (column_names.empty()) {
      os << 'c' << c;
    } else {
      std::string name = column_names[c];
      if (name.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (char ch : name) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        name = quoted + "\"";
      }
      os << name;
    }
  }
  os << "\r\n";
  char buf[32];
  for (Eigen::Index r = 0; r < ens.trials(); ++r) {
    for (Eigen::Index c = 0; c < ens.width(); ++c) {
      if (c) os << ',';
      std::snprintf(buf, sizeof buf, "%.17g", ens.data(r, c));
      os << buf;
    }
    os << "\r\n";
  }
}

}  // namespace conclab
