#include "robustcf/certifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "robustcf/linalg.hpp"

namespace rcf {
namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

constexpr double kGolden = 0.6180339887498949;

// x -> min eig(base + x * diag(direction)), reusing one solver workspace.
class DiagonalPencil {
 public:
  DiagonalPencil(MatrixXcd base, VectorXd direction)
      : base_(std::move(base)), direction_(std::move(direction)), work_(base_.rows(), base_.cols()),
        solver_(base_.rows()) {}

  double operator()(double x) {
    work_ = base_;
    work_.diagonal() += (x * direction_).cast<cplx>();
    solver_.compute(work_, Eigen::EigenvaluesOnly);
    return solver_.eigenvalues()(0);
  }

 private:
  MatrixXcd base_;
  VectorXd direction_;
  MatrixXcd work_;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> solver_;
};

struct SearchResult {
  double arg = 0.0;
  double value = -std::numeric_limits<double>::infinity();
};

// Maximises a concave f over [0, inf). Returns as soon as a point with
// f >= stop_at is seen. The right end of the bracket is doubled from `scale`
// until f stops increasing.
template <class F>
SearchResult maximize_concave(F&& f, double scale, double stop_at, const CertifierTolerances& tol) {
  SearchResult best{0.0, f(0.0)};
  if (best.value >= stop_at) return best;
  auto consider = [&](double x, double fx) {
    if (fx > best.value) best = {x, fx};
    return fx >= stop_at;
  };

  double lo = 0.0, prev_x = 0.0, prev_f = best.value;
  double x = scale > 0.0 ? scale : 1.0;
  double fx = f(x);
  if (consider(x, fx)) return best;
  int doublings = 0;
  while (fx > prev_f) {
    if (++doublings > tol.max_doublings) return best;  // still rising: unbounded multiplier
    lo = prev_x;
    prev_x = x;
    prev_f = fx;
    x *= 2.0;
    fx = f(x);
    if (consider(x, fx)) return best;
  }
  double hi = x;

  // Golden-section search on [lo, hi].
  double a = hi - kGolden * (hi - lo);
  double b = lo + kGolden * (hi - lo);
  double fa = f(a), fb = f(b);
  if (consider(a, fa) || consider(b, fb)) return best;
  while (hi - lo > tol.search_rel * hi) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + kGolden * (hi - lo);
      fb = f(b);
      if (consider(b, fb)) return best;
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - kGolden * (hi - lo);
      fa = f(a);
      if (consider(a, fa)) return best;
    }
  }
  return best;
}

MatrixXcd c4_base(const LmiBlocks& blocks, const VectorXcd& h_hat, double alpha) {
  const Index n = h_hat.size();
  MatrixXcd m(n + 1, n + 1);
  m.topLeftCorner(n, n) = blocks.signal;
  m.topRightCorner(n, 1) = blocks.cross;
  m.bottomLeftCorner(1, n) = blocks.cross.adjoint();
  m(n, n) = (h_hat.adjoint() * blocks.signal * h_hat)(0).real() - alpha;
  return m;
}

VectorXd c4_direction(Index n, double eps) {
  VectorXd d = VectorXd::Ones(n + 1);
  d(n) = -eps * eps;
  return d;
}

MatrixXcd c5_base(const VectorXcd& h_hat, const MatrixXcd& interference, double beta, double eps,
                  double sigma2) {
  const Index n = h_hat.size();
  const Index k = interference.cols();
  MatrixXcd m = MatrixXcd::Zero(1 + k + n, 1 + k + n);
  m(0, 0) = beta - sigma2;
  const Eigen::RowVectorXcd hv = h_hat.adjoint() * interference;
  m.block(0, 1, 1, k) = hv;
  m.block(1, 0, k, 1) = hv.adjoint();
  m.block(1, 1, k, k).setIdentity();
  m.block(1, 1 + k, k, n) = eps * interference.adjoint();
  m.block(1 + k, 1, n, k) = eps * interference;
  return m;
}

VectorXd c5_direction(Index n, Index k) {
  VectorXd d = VectorXd::Zero(1 + k + n);
  d(0) = -1.0;
  d.tail(n).setOnes();
  return d;
}

void require_eps(double eps) {
  if (!(eps >= 0.0)) throw std::domain_error("error radius must be >= 0");
}

}  // namespace

LmiBlocks LmiBlocks::build(const VectorXcd& h_hat, const MatrixXcd& beamformers, Index user) {
  if (beamformers.rows() != h_hat.size())
    throw ShapeError("LmiBlocks: beamformer rows must equal channel length");
  if (user < 0 || user >= beamformers.cols()) throw ShapeError("LmiBlocks: user out of range");
  LmiBlocks b;
  const VectorXcd v = beamformers.col(user);
  b.signal = v * v.adjoint();
  b.cross = b.signal * h_hat;
  b.interference.resize(beamformers.rows(), beamformers.cols() - 1);
  for (Index j = 0, c = 0; j < beamformers.cols(); ++j)
    if (j != user) b.interference.col(c++) = beamformers.col(j);
  return b;
}

MatrixXcd build_c4_lmi(const LmiBlocks& blocks, const VectorXcd& h_hat, double alpha, double delta,
                       double eps) {
  const Index n = h_hat.size();
  if (blocks.signal.rows() != n || blocks.signal.cols() != n || blocks.cross.size() != n)
    throw ShapeError("build_c4_lmi: block dimensions do not match the channel");
  MatrixXcd m = c4_base(blocks, h_hat, alpha);
  m.diagonal() += (delta * c4_direction(n, eps)).cast<cplx>();
  return m;
}

MatrixXcd build_c5_lmi(const VectorXcd& h_hat, const MatrixXcd& interference, double beta, double mu,
                       double eps, double sigma2) {
  if (interference.rows() != h_hat.size())
    throw ShapeError("build_c5_lmi: interference rows must equal channel length");
  MatrixXcd m = c5_base(h_hat, interference, beta, eps, sigma2);
  m.diagonal() += (mu * c5_direction(h_hat.size(), interference.cols())).cast<cplx>();
  return m;
}

double closed_form_numerator(const VectorXcd& h_hat, const VectorXcd& v, double eps) {
  require_eps(eps);
  if (h_hat.size() != v.size()) throw ShapeError("closed_form_numerator: length mismatch");
  const double r = std::max(std::abs(h_hat.dot(v)) - eps * v.norm(), 0.0);
  return r * r;
}

double envelope_denominator(const VectorXcd& h_hat, const MatrixXcd& interference, double eps,
                            double sigma2) {
  require_eps(eps);
  if (interference.rows() != h_hat.size() && interference.cols() > 0)
    throw ShapeError("envelope_denominator: length mismatch");
  double s = sigma2;
  for (Index j = 0; j < interference.cols(); ++j) {
    const double t = std::abs(h_hat.dot(interference.col(j))) + eps * interference.col(j).norm();
    s += t * t;
  }
  return s;
}

SlackSolution max_alpha(const VectorXcd& h_hat, const VectorXcd& v, double eps,
                        const CertifierTolerances& tol) {
  require_eps(eps);
  if (h_hat.size() != v.size()) throw ShapeError("max_alpha: length mismatch");
  const double vnorm2 = v.squaredNorm();
  if (vnorm2 == 0.0) return {0.0, 0.0};

  LmiBlocks blocks;
  blocks.signal = v * v.adjoint();
  blocks.cross = blocks.signal * h_hat;
  const double top = std::norm(h_hat.dot(v));
  const Index n = h_hat.size();

  if (eps == 0.0) {
    // No uncertainty: alpha* = |h^H v|^2 is reached only as delta -> inf.
    // Report the first doubling of delta whose LMI passes the witness test.
    double delta = vnorm2;
    for (int k = 0; k < tol.max_doublings; ++k, delta *= 2.0)
      if (is_psd(build_c4_lmi(blocks, h_hat, top, delta, 0.0), tol.psd_rel)) break;
    return {top, delta};
  }

  const VectorXd dir = c4_direction(n, eps);
  double lo = 0.0, lo_mult = 0.0, hi = top;
  double scale = vnorm2;
  // Width relative to the current lower bound so tiny alpha* keeps its
  // relative accuracy; the floor ends the search when alpha* = 0.
  const double floor = 1e-12 * top;
  while (hi - lo > tol.bisection_rel * std::max(lo, floor)) {
    const double mid = 0.5 * (lo + hi);
    DiagonalPencil pencil(c4_base(blocks, h_hat, mid), dir);
    const SearchResult r = maximize_concave(pencil, scale, 0.0, tol);
    if (r.value >= 0.0) {
      lo = mid;
      lo_mult = r.arg;
      if (r.arg > 0.0) scale = r.arg;
    } else {
      hi = mid;
    }
  }
  return {lo, lo_mult};
}

SlackSolution min_beta(const VectorXcd& h_hat, const MatrixXcd& interference, double eps,
                       double sigma2, const CertifierTolerances& tol) {
  require_eps(eps);
  if (interference.cols() > 0 && interference.rows() != h_hat.size())
    throw ShapeError("min_beta: length mismatch");
  if (interference.cols() == 0 || interference.isZero(0.0)) return {sigma2, 0.0};

  const Index n = h_hat.size();
  const Index k = interference.cols();
  const VectorXd dir = c5_direction(n, k);
  double scale = std::max(eps * interference.norm(), 1e-12);

  double hi = envelope_denominator(h_hat, interference, eps, sigma2);
  double lo = sigma2;
  // The envelope is a valid bracket, so accept it even when the search only
  // reaches the PSD boundary there.
  double hi_mult;
  {
    DiagonalPencil pencil(c5_base(h_hat, interference, hi, eps, sigma2), dir);
    hi_mult = maximize_concave(pencil, scale, 0.0, tol).arg;
    if (hi_mult > 0.0) scale = hi_mult;
  }
  const double width = tol.bisection_rel * hi;
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    DiagonalPencil pencil(c5_base(h_hat, interference, mid, eps, sigma2), dir);
    const SearchResult r = maximize_concave(pencil, scale, 0.0, tol);
    if (r.value >= 0.0) {
      hi = mid;
      hi_mult = r.arg;
      if (r.arg > 0.0) scale = r.arg;
    } else {
      lo = mid;
    }
  }
  return {hi, hi_mult};
}

std::vector<double> RobustCertificate::gammas() const {
  std::vector<double> g;
  g.reserve(users.size());
  for (const auto& u : users) g.push_back(u.gamma);
  return g;
}

UserCertificate certify_user(const VectorXcd& h_hat, const MatrixXcd& beamformers, Index user,
                             double eps, double sigma2, const CertifierTolerances& tol) {
  const LmiBlocks blocks = LmiBlocks::build(h_hat, beamformers, user);
  const SlackSolution a = max_alpha(h_hat, beamformers.col(user), eps, tol);
  const SlackSolution b = min_beta(h_hat, blocks.interference, eps, sigma2, tol);

  UserCertificate c;
  c.alpha = a.value;
  c.delta = a.multiplier;
  c.beta = b.value;
  c.mu = b.multiplier;
  c.gamma = c.alpha / c.beta;
  const EigenSummary w4 = eigen_extremes(build_c4_lmi(blocks, h_hat, c.alpha, c.delta, eps));
  const EigenSummary w5 =
      eigen_extremes(build_c5_lmi(h_hat, blocks.interference, c.beta, c.mu, eps, sigma2));
  c.c4_min_eig = w4.min;
  c.c4_norm = w4.norm();
  c.c5_min_eig = w5.min;
  c.c5_norm = w5.norm();
  return c;
}

RobustCertificate certify(const CTensor& est_h, const CTensor& beamformer,
                          std::span<const double> eps, std::span<const double> noise,
                          const CertifierTolerances& tol) {
  require_same_shape(est_h, beamformer, "certify");
  const std::size_t I = est_h.users();
  if (eps.size() != I || noise.size() != I)
    throw ShapeError("certify: eps and noise need one entry per user");
  const MatrixXcd V = beamformer.stacked();
  RobustCertificate cert;
  cert.users.reserve(I);
  for (std::size_t i = 0; i < I; ++i)
    cert.users.push_back(certify_user(est_h.user_vector(i), V, static_cast<Index>(i), eps[i],
                                      noise[i], tol));
  return cert;
}

double worst_case_sum_rate(const RobustCertificate& cert) {
  double r = 0.0;
  for (const auto& u : cert.users) {
    if (u.gamma < 0.0) throw std::domain_error("worst_case_sum_rate: negative gamma");
    r += std::log2(1.0 + u.gamma);
  }
  return r;
}

double sampling_oracle(const VectorXcd& h_hat, const MatrixXcd& beamformers, Index user, double eps,
                       double sigma2, std::size_t n, Rng& rng) {
  require_eps(eps);
  if (n < 1) throw std::invalid_argument("sampling_oracle: need at least one draw");
  if (beamformers.rows() != h_hat.size()) throw ShapeError("sampling_oracle: length mismatch");
  const Eigen::RowVectorXcd base = h_hat.adjoint() * beamformers;
  auto sinr = [&](const Eigen::RowVectorXcd& g) {
    double interf = 0.0;
    for (Index j = 0; j < g.size(); ++j)
      if (j != user) interf += std::norm(g(j));
    return std::norm(g(user)) / (interf + sigma2);
  };
  double worst = std::numeric_limits<double>::infinity();
  Eigen::RowVectorXcd g(beamformers.cols());
  for (std::size_t s = 0; s < n; ++s) {
    if (eps == 0.0) {
      worst = std::min(worst, sinr(base));
      continue;
    }
    const VectorXcd dh = eps * unit_sphere_sample(h_hat.size(), rng);
    g = base + dh.adjoint() * beamformers;
    worst = std::min(worst, sinr(g));
  }
  return worst;
}

SinrBound check_user_bound(const VectorXcd& h_hat, const MatrixXcd& beamformers, Index user,
                           double eps, double sigma2, std::size_t n, Rng& rng,
                           const CertifierTolerances& tol) {
  const UserCertificate c = certify_user(h_hat, beamformers, user, eps, sigma2, tol);
  return {c.gamma, sampling_oracle(h_hat, beamformers, user, eps, sigma2, n, rng), n};
}

}  // namespace rcf
