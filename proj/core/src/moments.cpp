#include "vmm/moments.hpp"

#include <cmath>
#include <string>

#include "vmm/errors.hpp"

namespace vmm {

void MomentProblem::check_record(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != record_dim()) {
    raise(ErrorCode::kMalformedRecord, name() + ": record has " + std::to_string(x.size()) + " fields, expected " +
                                           std::to_string(record_dim()));
  }
}

void MomentProblem::check_theta(const Vector& theta) const {
  if (theta.size() != param_dim()) {
    raise(ErrorCode::kDimensionMismatch, name() + ": theta has dimension " + std::to_string(theta.size()) +
                                             ", expected " + std::to_string(param_dim()));
  }
}

Dataset make_dataset(const MomentProblem& problem, RecordMatrix records) {
  const Index n = records.rows();
  require(n >= 1, ErrorCode::kDegenerateData, "dataset must contain at least one record");
  Dataset data;
  data.records = std::move(records);
  data.instruments.resize(n, problem.instrument_dim());
  for (Index i = 0; i < n; ++i) data.instruments.row(i) = problem.instrument(data.record(i)).transpose();
  return data;
}

Matrix residual_matrix(const MomentProblem& problem, const Dataset& data, const Vector& theta) {
  const Index n = data.size();
  Matrix out(n, problem.residual_dim());
  for (Index i = 0; i < n; ++i) out.row(i) = problem.residual(data.record(i), theta).transpose();
  return out;
}

Matrix stacked_jacobian(const MomentProblem& problem, const Dataset& data, const Vector& theta) {
  const Index n = data.size();
  const Index m = problem.residual_dim();
  Matrix out(n * m, problem.param_dim());
  for (Index i = 0; i < n; ++i) {
    const Matrix jac = problem.jacobian(data.record(i), theta);
    for (Index k = 0; k < m; ++k) out.row(k * n + i) = jac.row(k);
  }
  return out;
}

IvLayout IvLayout::contiguous(Index dz, Index dt) {
  IvLayout layout;
  for (Index i = 0; i < dz; ++i) layout.z.push_back(i);
  for (Index i = 0; i < dt; ++i) layout.t.push_back(dz + i);
  layout.y = dz + dt;
  return layout;
}

Index IvLayout::record_dim() const {
  Index top = y;
  for (Index c : z) top = std::max(top, c);
  for (Index c : t) top = std::max(top, c);
  return top + 1;
}

namespace {

Vector gather(std::span<const double> x, const std::vector<Index>& cols) {
  Vector out(static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out(static_cast<Index>(i)) = x[static_cast<std::size_t>(cols[i])];
  return out;
}

void validate_layout(const IvLayout& layout) {
  require(!layout.z.empty(), ErrorCode::kInvalidArgument, "IV layout needs at least one instrument column");
  require(!layout.t.empty(), ErrorCode::kInvalidArgument, "IV layout needs at least one treatment column");
  require(layout.y >= 0, ErrorCode::kInvalidArgument, "IV layout has a negative outcome column");
}

class LinearIvProblem final : public MomentProblem {
 public:
  explicit LinearIvProblem(IvLayout layout) : layout_(std::move(layout)) { validate_layout(layout_); }

  Index residual_dim() const override { return 1; }
  Index param_dim() const override { return static_cast<Index>(layout_.t.size()); }
  Index record_dim() const override { return layout_.record_dim(); }
  Index instrument_dim() const override { return static_cast<Index>(layout_.z.size()); }
  bool affine_in_theta() const override { return true; }
  std::string name() const override { return "linear_iv"; }

  Vector residual(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    Vector r(1);
    r(0) = x[static_cast<std::size_t>(layout_.y)] - theta.dot(gather(x, layout_.t));
    return r;
  }

  Matrix jacobian(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    return -gather(x, layout_.t).transpose();
  }

  Vector instrument(std::span<const double> x) const override {
    check_record(x);
    return gather(x, layout_.z);
  }

 private:
  IvLayout layout_;
};

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

class QuantileIvProblem final : public MomentProblem {
 public:
  QuantileIvProblem(double p, SmoothingConfig smoothing, IvLayout layout)
      : p_(p), tau_(smoothing.temperature), layout_(std::move(layout)) {
    validate_layout(layout_);
    require(p_ > 0.0 && p_ < 1.0, ErrorCode::kInvalidArgument, "quantile level must lie in (0, 1)");
    require(tau_ > 0.0, ErrorCode::kInvalidArgument, "smoothing temperature must be positive");
  }

  Index residual_dim() const override { return 1; }
  Index param_dim() const override { return static_cast<Index>(layout_.t.size()); }
  Index record_dim() const override { return layout_.record_dim(); }
  Index instrument_dim() const override { return static_cast<Index>(layout_.z.size()); }
  std::string name() const override { return "quantile_iv"; }

  Vector residual(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    Vector r(1);
    r(0) = logistic(scaled_gap(x, theta)) - p_;
    return r;
  }

  Matrix jacobian(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    const double s = logistic(scaled_gap(x, theta));
    return (s * (1.0 - s) / tau_) * gather(x, layout_.t).transpose();
  }

  Vector instrument(std::span<const double> x) const override {
    check_record(x);
    return gather(x, layout_.z);
  }

 private:
  double scaled_gap(std::span<const double> x, const Vector& theta) const {
    return (theta.dot(gather(x, layout_.t)) - x[static_cast<std::size_t>(layout_.y)]) / tau_;
  }

  double p_;
  double tau_;
  IvLayout layout_;
};

class DensityRatioProblem final : public MomentProblem {
 public:
  DensityRatioProblem(PolicyFn pi_e, PolicyFn pi_b, FeatureFn phi, Index basis_dim, Index state_dim)
      : pi_e_(std::move(pi_e)), pi_b_(std::move(pi_b)), phi_(std::move(phi)), b_(basis_dim), ds_(state_dim) {
    require(b_ >= 1 && ds_ >= 1, ErrorCode::kInvalidArgument, "density ratio problem needs positive dimensions");
  }

  Index residual_dim() const override { return 1; }
  Index param_dim() const override { return b_; }
  Index record_dim() const override { return 2 * ds_ + 1; }
  Index instrument_dim() const override { return ds_; }
  bool affine_in_theta() const override { return true; }
  std::string name() const override { return "density_ratio"; }

  Vector residual(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    const auto [phi_s, phi_next, ratio] = pieces(x);
    Vector r(1);
    r(0) = theta.dot(phi_s) * ratio - theta.dot(phi_next);
    return r;
  }

  Matrix jacobian(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    const auto [phi_s, phi_next, ratio] = pieces(x);
    return (phi_s * ratio - phi_next).transpose();
  }

  Vector instrument(std::span<const double> x) const override {
    check_record(x);
    return Eigen::Map<const Vector>(x.data() + ds_ + 1, ds_);
  }

 private:
  struct Pieces {
    Vector phi_s;
    Vector phi_next;
    double ratio;
  };

  Pieces pieces(std::span<const double> x) const {
    const auto s = x.subspan(0, static_cast<std::size_t>(ds_));
    const double a = x[static_cast<std::size_t>(ds_)];
    const auto s_next = x.subspan(static_cast<std::size_t>(ds_ + 1), static_cast<std::size_t>(ds_));
    const double behavior = pi_b_(a, s);
    if (!(behavior > 0.0)) raise(ErrorCode::kZeroBehaviorProbability, "behavior policy assigns zero probability");
    Pieces out{phi_(s), phi_(s_next), pi_e_(a, s) / behavior};
    require(out.phi_s.size() == b_ && out.phi_next.size() == b_, ErrorCode::kDimensionMismatch,
            "feature map returned the wrong dimension");
    return out;
  }

  PolicyFn pi_e_;
  PolicyFn pi_b_;
  FeatureFn phi_;
  Index b_;
  Index ds_;
};

class PinnedProblem final : public MomentProblem {
 public:
  PinnedProblem(ProblemPtr base, Index index, double value) : base_(std::move(base)), index_(index), value_(value) {
    require(base_ != nullptr, ErrorCode::kInvalidArgument, "pin_coordinate: null problem");
    require(base_->param_dim() >= 2, ErrorCode::kInvalidArgument, "pin_coordinate: need at least two parameters");
    require(index_ >= 0 && index_ < base_->param_dim(), ErrorCode::kInvalidArgument,
            "pin_coordinate: index out of range");
  }

  Index residual_dim() const override { return base_->residual_dim(); }
  Index param_dim() const override { return base_->param_dim() - 1; }
  Index record_dim() const override { return base_->record_dim(); }
  Index instrument_dim() const override { return base_->instrument_dim(); }
  bool affine_in_theta() const override { return base_->affine_in_theta(); }
  std::string name() const override { return base_->name() + "_pinned"; }

  Vector residual(std::span<const double> x, const Vector& theta) const override {
    check_theta(theta);
    return base_->residual(x, expand_pinned(theta, index_, value_));
  }

  Matrix jacobian(std::span<const double> x, const Vector& theta) const override {
    check_theta(theta);
    const Matrix full = base_->jacobian(x, expand_pinned(theta, index_, value_));
    Matrix out(full.rows(), full.cols() - 1);
    out << full.leftCols(index_), full.rightCols(full.cols() - index_ - 1);
    return out;
  }

  Vector instrument(std::span<const double> x) const override { return base_->instrument(x); }

 private:
  ProblemPtr base_;
  Index index_;
  double value_;
};

}  // namespace

ProblemPtr linear_iv_problem(const IvLayout& layout) { return std::make_shared<LinearIvProblem>(layout); }

ProblemPtr linear_iv_problem(Index b) {
  require(b >= 1, ErrorCode::kInvalidArgument, "linear IV needs b >= 1");
  return linear_iv_problem(IvLayout::contiguous(b, b));
}

SmoothingConfig default_smoothing(const Vector& outcomes) {
  require(outcomes.size() >= 2, ErrorCode::kDegenerateData, "default_smoothing: need at least two outcomes");
  const double mean = outcomes.mean();
  const double var = (outcomes.array() - mean).square().sum() / static_cast<double>(outcomes.size() - 1);
  const double sd = std::sqrt(var);
  require(sd > 0.0, ErrorCode::kDegenerateData, "default_smoothing: outcomes are constant");
  return SmoothingConfig{0.05 * sd};
}

ProblemPtr quantile_iv_problem(double p, SmoothingConfig smoothing, const IvLayout& layout) {
  return std::make_shared<QuantileIvProblem>(p, smoothing, layout);
}

ProblemPtr density_ratio_problem(PolicyFn pi_e, PolicyFn pi_b, FeatureFn phi, Index basis_dim, Index state_dim) {
  return std::make_shared<DensityRatioProblem>(std::move(pi_e), std::move(pi_b), std::move(phi), basis_dim,
                                               state_dim);
}

ProblemPtr pin_coordinate(ProblemPtr base, Index index, double value) {
  return std::make_shared<PinnedProblem>(std::move(base), index, value);
}

Vector expand_pinned(const Vector& free_theta, Index index, double value) {
  Vector full(free_theta.size() + 1);
  full << free_theta.head(index), value, free_theta.tail(free_theta.size() - index);
  return full;
}

Vector normalize_density_ratio(const Vector& theta, const FeatureFn& phi, const Dataset& data, Index state_dim) {
  double total = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    total += theta.dot(phi(data.record(i).subspan(0, static_cast<std::size_t>(state_dim))));
  }
  const double mean = total / static_cast<double>(data.size());
  require(std::abs(mean) > 0.0, ErrorCode::kDegenerateData, "density ratio has zero sample mean");
  return theta / mean;
}

}  // namespace vmm
