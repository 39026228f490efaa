#include <cmath>
#include <numbers>
#include <stdexcept>

#include "l2r/decorrelation.hpp"
#include "l2r/errors.hpp"
#include "l2r/random.hpp"

namespace l2r {

RFFBank::RFFBank(Eigen::VectorXd omega_u, Eigen::VectorXd phase_u, Eigen::VectorXd omega_v, Eigen::VectorXd phase_v)
    : omega_u_(std::move(omega_u)), phase_u_(std::move(phase_u)), omega_v_(std::move(omega_v)),
      phase_v_(std::move(phase_v)) {
    const auto n = omega_u_.size();
    if (n == 0 || phase_u_.size() != n || omega_v_.size() != n || phase_v_.size() != n) {
        throw ShapeError("RFF bank sides must hold the same non-zero number of functions");
    }
}

RFFBank RFFBank::sample(int functions_per_side, std::uint64_t seed) {
    if (functions_per_side <= 0) {
        throw std::invalid_argument("RFF bank needs at least one function per side");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    Eigen::VectorXd ou(functions_per_side), pu(functions_per_side), ov(functions_per_side), pv(functions_per_side);
    for (int a = 0; a < functions_per_side; ++a) {
        ou(a) = normal(rng);
        pu(a) = phase(rng);
    }
    for (int b = 0; b < functions_per_side; ++b) {
        ov(b) = normal(rng);
        pv(b) = phase(rng);
    }
    return RFFBank(std::move(ou), std::move(pu), std::move(ov), std::move(pv));
}

namespace {

// sqrt(2) cos(omega z + phi), one column per function
Eigen::MatrixXd cos_features(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& omega,
                             const Eigen::VectorXd& phase) {
    Eigen::MatrixXd arg = z * omega.transpose();
    arg.rowwise() += phase.transpose();
    return std::numbers::sqrt2 * arg.array().cos().matrix();
}

Eigen::MatrixXd cos_derivative(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& omega,
                               const Eigen::VectorXd& phase) {
    Eigen::MatrixXd arg = z * omega.transpose();
    arg.rowwise() += phase.transpose();
    Eigen::MatrixXd out = -std::numbers::sqrt2 * arg.array().sin().matrix();
    return out * omega.asDiagonal();
}

}  // namespace

Eigen::MatrixXd RFFBank::u(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return cos_features(z, omega_u_, phase_u_);
}
Eigen::MatrixXd RFFBank::v(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return cos_features(z, omega_v_, phase_v_);
}
Eigen::MatrixXd RFFBank::du(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return cos_derivative(z, omega_u_, phase_u_);
}
Eigen::MatrixXd RFFBank::dv(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return cos_derivative(z, omega_v_, phase_v_);
}

// ---------------------------------------------------------------------------

double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("softplus is positive; cannot invert " + std::to_string(y));
    return y > 30.0 ? y : std::log(std::expm1(y));
}

namespace {

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

WeightVector::WeightVector(std::size_t n) : rho_(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), inverse_softplus(1.0))) {
    renormalize();
}

WeightVector WeightVector::from_rho(Eigen::VectorXd rho) {
    if (!rho.allFinite()) throw NumericalError("weight parameters must be finite");
    WeightVector w;
    w.rho_ = std::move(rho);
    w.renormalize();
    return w;
}

void WeightVector::renormalize() {
    softplus_sum_ = 0.0;
    for (Eigen::Index i = 0; i < rho_.size(); ++i) softplus_sum_ += softplus(rho_(i));
}

double WeightVector::weight(int index) const {
    return softplus(rho_(index)) * static_cast<double>(rho_.size()) / softplus_sum_;
}

Eigen::VectorXd WeightVector::weights() const {
    Eigen::VectorXd w(rho_.size());
    for (Eigen::Index i = 0; i < rho_.size(); ++i) w(i) = weight(static_cast<int>(i));
    return w;
}

Eigen::VectorXd WeightVector::gather(std::span<const int> ids) const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) w(static_cast<Eigen::Index>(i)) = weight(ids[i]);
    return w;
}

Eigen::VectorXd WeightVector::grad_rho(const Eigen::Ref<const Eigen::VectorXd>& grad_w) const {
    if (grad_w.size() != rho_.size()) throw ShapeError("weight gradient length differs from weight count");
    const double n = static_cast<double>(rho_.size());
    const Eigen::VectorXd w = weights();
    const double mean_gw = grad_w.dot(w) / n;
    Eigen::VectorXd out(rho_.size());
    for (Eigen::Index m = 0; m < rho_.size(); ++m) {
        out(m) = sigmoid(rho_(m)) * (n / softplus_sum_) * (grad_w(m) - mean_gw);
    }
    return out;
}

double WeightVector::step(std::span<const int> ids, const Eigen::Ref<const Eigen::VectorXd>& grad_w_batch, double lr) {
    if (grad_w_batch.size() != static_cast<Eigen::Index>(ids.size())) {
        throw ShapeError("batch weight gradient length differs from batch size");
    }
    if (!grad_w_batch.allFinite()) throw NumericalError("non-finite weight gradient");
    const double n = static_cast<double>(rho_.size());
    double mean_gw = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) mean_gw += grad_w_batch(static_cast<Eigen::Index>(i)) * weight(ids[i]);
    mean_gw /= n;
    const double scale = n / softplus_sum_;
    Eigen::VectorXd delta(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        delta(k) = -lr * sigmoid(rho_(ids[i])) * scale * (grad_w_batch(k) - mean_gw);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        double& r = rho_(ids[i]);
        const double before = softplus(r);
        r += delta(static_cast<Eigen::Index>(i));
        softplus_sum_ += softplus(r) - before;
    }
    return delta.norm();
}

}  // namespace l2r
