#include <cmath>

#include "internal.hpp"
#include "vmm/kernel_vmm.hpp"
#include "vmm/owgmm.hpp"

namespace vmm::verify {

using namespace detail;

SuiteReport span_equivalence_suite(std::uint64_t seed) {
  return timed_suite("lemma1", seed, [&](SuiteReport& report) {
    constexpr double kTol = 1e-8;
    for (int inst = 0; inst < 50; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(inst)));
      const Index n = uniform_index(rng, 10, 50);
      const Index k = uniform_index(rng, 1, 4);
      const auto problem = linear_iv_problem(1);
      RecordMatrix records(n, 3);
      for (Index i = 0; i < n; ++i) {
        const double z = rng.normal();
        const double t = z + 0.5 * rng.normal();
        records(i, 0) = z;
        records(i, 1) = t;
        records(i, 2) = 1.5 * t + rng.normal();
      }
      const Dataset data = make_dataset(*problem, records);
      const InstrumentBasis basis = InstrumentBasis::polynomial(static_cast<int>(k - 1));
      Vector theta(1), prior(1);
      theta << rng.normal(1.0, 1.0);
      prior << rng.normal(1.0, 1.0);

      const SymMatrix gamma = gamma_matrix(basis, *problem, data, prior);
      const double owgmm = owgmm_objective(basis, *problem, data, theta, gamma);

      // Independent stationary point: F (n x k) by direct powers.
      Matrix f(n, k);
      Vector r(n), rp(n);
      for (Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (Index l = 0; l < k; ++l, p *= records(i, 0)) f(i, l) = p;
        r(i) = records(i, 2) - theta(0) * records(i, 1);
        rp(i) = records(i, 2) - prior(0) * records(i, 1);
      }
      const Vector g = f.transpose() * r / static_cast<double>(n);
      const Matrix weighted = rp.asDiagonal() * f;
      const Matrix gamma_oracle = weighted.transpose() * weighted / static_cast<double>(n);
      const Vector v_star = 2.0 * gamma_oracle.ldlt().solve(g);
      const double span_value = span_game_value(basis, *problem, data, theta, prior, v_star);

      double perturbed_max = -1e300;
      for (int trial = 0; trial < 5; ++trial) {
        Vector dv(k);
        for (Index l = 0; l < k; ++l) dv(l) = 1e-3 * rng.normal() * (1.0 + std::abs(v_star(l)));
        perturbed_max = std::max(perturbed_max, span_game_value(basis, *problem, data, theta, prior, v_star + dv));
      }
      const double err = relative_error(owgmm, span_value);
      Check c;
      c.name = "instance " + std::to_string(inst);
      c.value = err;
      c.threshold = kTol;
      c.passed = err <= kTol && perturbed_max <= span_value + kTol * std::abs(span_value);
      c.detail = "n=" + std::to_string(n) + " k=" + std::to_string(k) + fmt(" owgmm=%.12g span=%.12g", owgmm, span_value);
      report.checks.push_back(c);
    }
  });
}

SuiteReport closed_form_suite(std::uint64_t seed) {
  return timed_suite("lemma6", seed, [&](SuiteReport& report) {
    constexpr double kTol = 1e-8;
    for (int inst = 0; inst < 50; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(inst)));
      const Index n = uniform_index(rng, 2, 40);
      const Index m = uniform_index(rng, 1, 2);
      const Index dz = uniform_index(rng, 1, 2);
      ProblemPtr problem;
      RecordMatrix records;
      if (m == 1) {
        problem = linear_iv_problem(IvLayout::contiguous(dz, 2));
        records.resize(n, dz + 3);
        for (Index i = 0; i < n; ++i) {
          double zsum = 0.0;
          for (Index d = 0; d < dz; ++d) zsum += (records(i, d) = rng.normal());
          records(i, dz) = zsum + rng.normal();
          records(i, dz + 1) = 0.5 * zsum + rng.normal();
          records(i, dz + 2) = records(i, dz) - records(i, dz + 1) + rng.normal();
        }
      } else {
        problem = std::make_shared<TwoEquationProblem>(dz);
        records.resize(n, dz + 4);
        for (Index i = 0; i < n; ++i) {
          double zsum = 0.0;
          for (Index d = 0; d < dz; ++d) zsum += (records(i, d) = rng.normal());
          records(i, dz) = zsum + rng.normal();
          records(i, dz + 1) = zsum * zsum + rng.normal();
          records(i, dz + 2) = records(i, dz) + rng.normal();
          records(i, dz + 3) = 2.0 * records(i, dz + 1) + rng.normal();
        }
      }
      const Dataset data = make_dataset(*problem, records);
      const double base_bw = median_bandwidth(data.instruments);
      std::vector<KernelSpec> kernels;
      for (Index k = 0; k < m; ++k) kernels.push_back(KernelSpec::gaussian(base_bw * rng.uniform(0.3, 2.0)));
      const double alpha = log_uniform(rng, 0.01, 1.0);
      Vector theta(2), prior(2);
      for (Index j = 0; j < 2; ++j) {
        theta(j) = rng.normal();
        prior(j) = rng.normal();
      }

      const GramAssembly assembly = assemble(*problem, data, kernels, prior, alpha);
      const double closed_form = objective(assembly, *problem, data, theta);

      // Brute force over whitened representer coefficients gamma_k, f_k = B_k gamma_k.
      const Matrix r = residual_matrix(*problem, data, theta);
      const Matrix rp = residual_matrix(*problem, data, prior);
      const double nd = static_cast<double>(n);
      Vector c(n * m);
      Matrix g(n, n * m);
      for (Index k = 0; k < m; ++k) {
        Matrix kk(n, n);
        for (Index i = 0; i < n; ++i) {
          for (Index j = 0; j < n; ++j) {
            kk(i, j) = kernel_entry(kernels[static_cast<std::size_t>(k)], data.instruments, i, j);
          }
        }
        const Matrix b = gram_root(kk);
        c.segment(k * n, n) = b.transpose() * r.col(k) / nd;
        g.middleCols(k * n, n) = rp.col(k).asDiagonal() * b;
      }
      const Matrix h = g.transpose() * g / (2.0 * nd) + 0.5 * alpha * Matrix::Identity(n * m, n * m);
      const Vector gamma = h.llt().solve(c);
      const Vector fitted = g * gamma;
      const double brute = c.dot(gamma) - fitted.squaredNorm() / (4.0 * nd) - 0.25 * alpha * gamma.squaredNorm();

      const double err = relative_error(closed_form, brute);
      Check chk;
      chk.name = "instance " + std::to_string(inst);
      chk.value = err;
      chk.threshold = kTol;
      chk.passed = err <= kTol && closed_form >= 0.0;
      chk.detail = "n=" + std::to_string(n) + " m=" + std::to_string(m) +
                   fmt(" closed=%.12g brute=%.12g", closed_form, brute);
      report.checks.push_back(chk);
    }
  });
}

SuiteReport kernel_iv_suite(std::uint64_t seed) {
  return timed_suite("lemma7", seed, [&](SuiteReport& report) {
    constexpr double kTol = 1e-5;
    for (int inst = 0; inst < 20; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(inst)));
      const Index n = uniform_index(rng, 10, 60);
      KernelIvData data{Matrix(n, 1), Matrix(n, 1), Vector(n)};
      for (Index i = 0; i < n; ++i) {
        const double z = rng.normal();
        const double u = rng.normal();
        data.z(i, 0) = z;
        data.t(i, 0) = z + 0.5 * u + 0.3 * rng.normal();
        data.y(i) = std::sin(data.t(i, 0)) + 0.5 * u + 0.2 * rng.normal();
      }
      const KernelSpec kf = KernelSpec::gaussian(median_bandwidth(data.z) * rng.uniform(0.3, 1.5));
      const KernelSpec kg = KernelSpec::gaussian(median_bandwidth(data.t) * rng.uniform(0.3, 1.5));
      const double alpha = log_uniform(rng, 0.05, 1.0);
      const double lambda = log_uniform(rng, 1e-3, 1e-1);
      const double slope = rng.uniform(-1.0, 1.0);
      const auto prior = [slope](const Vector& t) { return slope * t(0); };

      const KernelIvResult result = kernel_iv_closed_form(data, kf, kg, prior, alpha, lambda);

      // M from whitened coordinates of L_f; minimizer over whitened coefficients of
      // (Y - B_g gamma)^T M (Y - B_g gamma) + lambda |gamma|^2 by conjugate gradients.
      const double nd = static_cast<double>(n);
      Matrix lf(n, n), lg(n, n);
      Vector rp(n);
      for (Index i = 0; i < n; ++i) {
        rp(i) = data.y(i) - slope * data.t(i, 0);
        for (Index j = 0; j < n; ++j) {
          lf(i, j) = kernel_entry(kf, data.z, i, j);
          lg(i, j) = kernel_entry(kg, data.t, i, j);
        }
      }
      const Matrix bf = gram_root(lf);
      const Matrix inner = bf.transpose() * rp.cwiseAbs2().asDiagonal() * bf / nd + alpha * Matrix::Identity(n, n);
      const Matrix m = bf * inner.llt().solve(bf.transpose()) / (nd * nd);
      const Matrix bg = gram_root(lg);
      const Matrix system = bg.transpose() * m * bg + lambda * Matrix::Identity(n, n);
      const Vector rhs = bg.transpose() * m * data.y;
      Vector gamma = Vector::Zero(n);
      Vector resid = rhs;
      Vector dir = resid;
      double rs = resid.squaredNorm();
      for (Index it = 0; it < 20 * n && std::sqrt(rs) > 1e-15 * rhs.norm(); ++it) {
        const Vector sd = system * dir;
        const double step = rs / dir.dot(sd);
        gamma += step * dir;
        resid -= step * sd;
        const double rs_next = resid.squaredNorm();
        dir = resid + (rs_next / rs) * dir;
        rs = rs_next;
      }

      // RKHS distance between the two functions:
      // |g_lib|^2 = beta^T L_g beta, <g_lib, g_oracle> = beta^T B_g gamma, |g_oracle|^2 = |gamma|^2.
      const Vector& beta = result.beta;
      const double lib_sq = beta.dot(lg * beta);
      const double cross = beta.dot(bg * gamma);
      const double oracle_sq = gamma.squaredNorm();
      const double dist = std::sqrt(std::max(0.0, lib_sq - 2.0 * cross + oracle_sq));
      const double rkhs_err = dist / std::max(std::sqrt(oracle_sq), 1e-300);
      const Vector fit_lib = lg * beta;
      const Vector fit_oracle = bg * gamma;
      const double fit_err = (fit_lib - fit_oracle).lpNorm<Eigen::Infinity>() /
                             std::max(fit_oracle.lpNorm<Eigen::Infinity>(), 1e-300);
      const double err = std::max(rkhs_err, fit_err);
      Check chk;
      chk.name = "instance " + std::to_string(inst);
      chk.value = err;
      chk.threshold = kTol;
      chk.passed = err <= kTol;
      chk.detail = "n=" + std::to_string(n) + fmt(" rkhs_rel=%.3g fitted_rel=%.3g", rkhs_err, fit_err);
      report.checks.push_back(chk);
    }
  });
}

SuiteReport variational_identity_suite(std::uint64_t seed) {
  return timed_suite("variational-identity", seed, [&](SuiteReport& report) {
    constexpr double kTol = 1e-8;
    const double alphas[] = {1e-3, 1.0, 10.0};
    for (int inst = 0; inst < 100; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(inst)));
      const Index dim = uniform_index(rng, 1, 10);
      const Index rank = uniform_index(rng, 0, dim);
      Matrix root(dim, std::max<Index>(rank, 1));
      for (Index i = 0; i < root.size(); ++i) root.data()[i] = rank == 0 ? 0.0 : rng.normal();
      const Matrix c = root * root.transpose();
      Vector h(dim);
      for (Index i = 0; i < dim; ++i) h(i) = rng.normal();
      const double alpha = alphas[inst % 3];

      const double closed = variational_quadratic(SymMatrix(c), alpha, h);

      // Numerical maximization of <h, v> - 1/4 <(C + alpha I) v, v> by conjugate gradients
      // on its stationarity condition, then evaluation of the objective itself.
      const Matrix a = 0.25 * (c + alpha * Matrix::Identity(dim, dim));
      Vector v = Vector::Zero(dim);
      Vector resid = 0.5 * h;
      Vector dir = resid;
      double rs = resid.squaredNorm();
      for (Index it = 0; it < 50 * dim && rs > 0.0; ++it) {
        const Vector ad = a * dir;
        const double step = rs / dir.dot(ad);
        v += step * dir;
        resid -= step * ad;
        const double rs_next = resid.squaredNorm();
        if (std::sqrt(rs_next) <= 1e-16 * h.norm()) break;
        dir = resid + (rs_next / rs) * dir;
        rs = rs_next;
      }
      const double numeric = h.dot(v) - 0.25 * v.dot((c + alpha * Matrix::Identity(dim, dim)) * v);
      const double err = h.norm() == 0.0 ? std::abs(closed) : relative_error(closed, numeric);
      Check chk;
      chk.name = "instance " + std::to_string(inst);
      chk.value = err;
      chk.threshold = kTol;
      chk.passed = err <= kTol;
      chk.detail = "dim=" + std::to_string(dim) + fmt(" alpha=%g closed=%.12g", alpha, closed);
      report.checks.push_back(chk);
    }
  });
}

}  // namespace vmm::verify
