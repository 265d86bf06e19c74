#include "cfisac/precoders.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace cfisac {

using CMat = Eigen::MatrixXcd;
using Map = Eigen::Map<const CMat>;

namespace {

CMat to_matrix(const std::vector<cdouble>& H, int M, int A) {
  if (H.size() != static_cast<std::size_t>(M) * A)
    throw std::invalid_argument("precoder: channel matrix size mismatch");
  // Incoming storage is row-major [M x A].
  CMat Hm(M, A);
  for (int m = 0; m < M; ++m)
    for (int a = 0; a < A; ++a) Hm(m, a) = H[idx2(m, a, A)];
  return Hm;
}

std::vector<cdouble> from_matrix(const CMat& W) {
  std::vector<cdouble> out(static_cast<std::size_t>(W.rows()) * W.cols());
  for (int m = 0; m < W.rows(); ++m)
    for (int a = 0; a < W.cols(); ++a) out[idx2(m, a, W.cols())] = W(m, a);
  return out;
}

}  // namespace

std::vector<cdouble> zf_columns(const std::vector<cdouble>& H, int M, int A) {
  const CMat Hm = to_matrix(H, M, A);
  CMat G = Hm.adjoint() * Hm;
  Eigen::LLT<CMat> llt(G);
  if (A > M || llt.info() != Eigen::Success ||
      G.real().diagonal().minCoeff() <= 0.0) {
    G += 1e-6 * G.trace().real() * CMat::Identity(A, A);
    llt.compute(G);
  }
  return from_matrix(llt.solve(Hm.adjoint()).adjoint());
}

std::vector<cdouble> mmse_columns(const std::vector<cdouble>& H, int M, int A,
                                  int K_total, double sigma_c2, double P) {
  const CMat Hm = to_matrix(H, M, A);
  const CMat C =
      Hm * Hm.adjoint() +
      (static_cast<double>(K_total) * sigma_c2 / P) * CMat::Identity(M, M);
  return from_matrix(C.llt().solve(Hm));
}

std::vector<cdouble> default_radar_precoder(const ScenarioConfig& config,
                                            double split) {
  const int M = config.M, N_s = config.N_s;
  // ||c I_M||_F^2 summed over subcarriers = N_s * M * c^2 = split * P_j.
  const double c = std::sqrt(split * config.P_j / (N_s * M));
  std::vector<cdouble> W_r(static_cast<std::size_t>(N_s) * M * M, {0.0, 0.0});
  for (int i = 0; i < N_s; ++i)
    for (int m = 0; m < M; ++m) W_r[idx3(i, m, m, M, M)] = c;
  return W_r;
}

double ap_energy(const std::vector<cdouble>& W, const ScenarioConfig& config,
                 int j) {
  const int cols = config.M + config.K;
  const std::size_t per_ap = static_cast<std::size_t>(config.N_s) * config.M * cols;
  double e = 0.0;
  const cdouble* base = W.data() + per_ap * j;
  for (std::size_t n = 0; n < per_ap; ++n) e += std::norm(base[n]);
  return e;
}

std::vector<int> project_power(std::vector<cdouble>& W,
                               const ScenarioConfig& config) {
  const int cols = config.M + config.K;
  const std::size_t per_ap = static_cast<std::size_t>(config.N_s) * config.M * cols;
  if (W.size() != per_ap * config.J)
    throw std::invalid_argument("project_power: W shape mismatch");
  std::vector<int> zero_aps;
  for (int j = 0; j < config.J; ++j) {
    const double e = ap_energy(W, config, j);
    if (e <= 0.0) {
      zero_aps.push_back(j);
      continue;
    }
    const double s = std::sqrt(config.P_j / e);
    cdouble* base = W.data() + per_ap * j;
    for (std::size_t n = 0; n < per_ap; ++n) base[n] *= s;
  }
  return zero_aps;
}

std::vector<cdouble> build_baseline_precoders(const ScenarioConfig& config,
                                              const ChannelSet& channels,
                                              const std::vector<int>& kappa,
                                              const std::vector<int>& Lambda,
                                              CommPrecoder kind, double split) {
  const int J = config.J, K = config.K, M = config.M, N_s = config.N_s;
  const int cols = M + K;
  std::vector<cdouble> W(static_cast<std::size_t>(J) * N_s * M * cols,
                         {0.0, 0.0});
  const auto W_r = default_radar_precoder(config, split);
  const double comm_budget = (1.0 - split) * config.P_j;

  for (int j = 0; j < J; ++j) {
    if (!kappa[j]) continue;
    std::vector<int> assoc;
    for (int k = 0; k < K; ++k)
      if (Lambda[idx2(j, k, K)]) assoc.push_back(k);

    // Unnormalized comm directions per subcarrier, then one common scale so
    // the comm block carries its share of the budget across all i.
    std::vector<std::vector<cdouble>> dirs(N_s);
    double comm_energy = 0.0;
    if (kind != CommPrecoder::kNone && !assoc.empty()) {
      const int A = static_cast<int>(assoc.size());
      for (int i = 0; i < N_s; ++i) {
        std::vector<cdouble> Hji(static_cast<std::size_t>(M) * A);
        for (int a = 0; a < A; ++a) {
          const cdouble* h = channels.h_at(j, i, assoc[a]);
          for (int m = 0; m < M; ++m) Hji[idx2(m, a, A)] = h[m];
        }
        dirs[i] = (kind == CommPrecoder::kZeroForcing)
                      ? zf_columns(Hji, M, A)
                      : mmse_columns(Hji, M, A, K, config.sigma_c2, config.P_j);
        for (const cdouble& v : dirs[i]) comm_energy += std::norm(v);
      }
    }
    const double comm_scale =
        comm_energy > 0.0 ? std::sqrt(comm_budget / comm_energy) : 0.0;

    for (int i = 0; i < N_s; ++i) {
      cdouble* Wji = W.data() + idx4(j, i, 0, 0, N_s, M, cols);
      for (int m = 0; m < M; ++m)
        for (int s = 0; s < M; ++s)
          Wji[idx2(m, s, cols)] = W_r[idx3(i, m, s, M, M)];
      if (!dirs[i].empty()) {
        const int A = static_cast<int>(assoc.size());
        for (int a = 0; a < A; ++a)
          for (int m = 0; m < M; ++m)
            Wji[idx2(m, M + assoc[a], cols)] = comm_scale * dirs[i][idx2(m, a, A)];
      }
    }
  }
  project_power(W, config);
  return W;
}

}  // namespace cfisac
