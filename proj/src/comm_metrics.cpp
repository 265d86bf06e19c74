#include "cfisac/comm_metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cfisac {

CommReport sinr_report(const ChannelSet& H, const std::vector<cdouble>& W,
                       const std::vector<int>& kappa,
                       const std::vector<int>& Lambda, double sigma_c2,
                       MuMode mode) {
  const int J = H.J, K = H.K, M = H.M, N_s = H.N_s;
  const int cols = M + K;
  if (static_cast<int>(kappa.size()) != J ||
      static_cast<int>(Lambda.size()) != J * K ||
      W.size() != static_cast<std::size_t>(J) * N_s * M * cols)
    throw std::invalid_argument("sinr_report: shape mismatch");

  CommReport rep;
  rep.N_s = N_s;
  rep.K = K;
  rep.sinr.assign(static_cast<std::size_t>(N_s) * K, 0.0);
  rep.mu.assign(static_cast<std::size_t>(N_s) * K, 0.0);
  rep.iota.assign(static_cast<std::size_t>(N_s) * K, 0.0);

#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < N_s; ++i) {
    for (int k = 0; k < K; ++k) {
      // h^H w for every column of every AP's precoder, summed over the
      // transmit set with the appropriate gate.
      auto hw = [&](int j, int col) {
        const cdouble* h = H.h_at(j, i, k);
        const cdouble* Wji = W.data() + idx4(j, i, 0, col, N_s, M, cols);
        cdouble acc{0.0, 0.0};
        for (int m = 0; m < M; ++m) acc += std::conj(h[m]) * Wji[m * cols];
        return acc;
      };

      cdouble sig{0.0, 0.0};
      for (int j = 0; j < J; ++j)
        if (kappa[j] && Lambda[idx2(j, k, K)]) sig += hw(j, M + k);

      double mu = 0.0;
      for (int n = 0; n < K; ++n) {
        if (n == k) continue;
        cdouble cross{0.0, 0.0};
        for (int j = 0; j < J; ++j) {
          const int gate = (mode == MuMode::kCorrected) ? Lambda[idx2(j, n, K)]
                                                        : Lambda[idx2(j, k, K)];
          if (kappa[j] && gate) cross += hw(j, M + n);
        }
        mu += std::norm(cross);
      }

      double iota = 0.0;
      for (int m = 0; m < M; ++m) {
        cdouble radar{0.0, 0.0};
        for (int j = 0; j < J; ++j)
          if (kappa[j]) radar += hw(j, m);
        iota += std::norm(radar);
      }

      const std::size_t at = idx2(i, k, K);
      rep.mu[at] = mu;
      rep.iota[at] = iota;
      rep.sinr[at] = std::norm(sig) / (mu + iota + sigma_c2);
    }
  }

  double rc = 0.0;
  for (const double s : rep.sinr) rc += std::log2(1.0 + s);
  rep.R_c = rc;
  return rep;
}

}  // namespace cfisac
