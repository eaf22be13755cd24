#include "mlc/report.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>

#include "mlc/csv.hpp"

namespace mlc {

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

std::string significance_stars(double p_value) {
  if (p_value < 0.01) return "***";
  if (p_value < 0.05) return "**";
  if (p_value < 0.1) return "*";
  return "";
}

std::vector<CoefficientEntry> coefficient_entries(
    const FitResult& fit, const std::vector<std::string>& covariate_names) {
  const arma::uword T = fit.dims.T;
  const arma::uword M = fit.dims.M;
  const arma::uword K = fit.dims.K;

  std::vector<std::string> names = covariate_names;
  if (names.size() != K) {
    names.assign(K, "");
    names[0] = "intercept";
    for (arma::uword k = 1; k < K; ++k) names[k] = "z" + std::to_string(k);
  }

  std::vector<CoefficientEntry> out;
  for (arma::uword m = 0; m < M; ++m) {
    for (arma::uword t = 1; t < T; ++t) {
      for (arma::uword k = 0; k < K; ++k) {
        const arma::uword pos = (M - 1) + m * (T - 1) * K + (t - 1) * K + k;
        CoefficientEntry e;
        e.hl_class = m + 1;
        e.response_class = t + 1;
        e.covariate = names[k];
        e.method = fit.method;
        e.estimate = fit.theta2[pos];
        e.se = fit.se[pos];
        e.z = e.se > 0.0 ? e.estimate / e.se : 0.0;
        e.p = two_sided_p(e.z);
        e.stars = significance_stars(e.p);
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

void write_coefficients_csv(const std::vector<FitResult>& fits,
                            const std::vector<std::string>& covariate_names,
                            std::ostream& os) {
  os << "hl_class,response_class,covariate,method,estimate,se,z,p,stars\n";
  for (const auto& fit : fits) {
    for (const auto& e : coefficient_entries(fit, covariate_names)) {
      os << e.hl_class << ',' << e.response_class << ',' << e.covariate << ','
         << to_string(e.method) << ',' << csv_double(e.estimate) << ','
         << csv_double(e.se) << ',' << csv_double(e.z) << ','
         << csv_double(e.p) << ',' << e.stars << '\n';
    }
  }
}

void write_coefficients_table(const std::vector<FitResult>& fits,
                              const std::vector<std::string>& covariate_names,
                              std::ostream& os) {
  if (fits.empty()) return;
  const arma::uword T = fits[0].dims.T;
  const arma::uword M = fits[0].dims.M;
  const arma::uword K = fits[0].dims.K;
  if (T < 2) {
    os << "single response class: no membership coefficients\n";
    return;
  }

  std::vector<std::vector<CoefficientEntry>> per_fit;
  for (const auto& fit : fits)
    per_fit.push_back(coefficient_entries(fit, covariate_names));

  auto entry = [&](std::size_t f, arma::uword m, arma::uword t, arma::uword k)
      -> const CoefficientEntry& {
    return per_fit[f][(m * (T - 1) + (t - 1)) * K + k];
  };

  const int width = 16;
  char buf[64];
  for (arma::uword m = 0; m < M; ++m) {
    os << "high-level class " << (m + 1) << '\n';
    os << std::left << std::setw(width) << "";
    for (arma::uword t = 1; t < T; ++t)
      for (std::size_t f = 0; f < fits.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "class %llu (%s)",
                      static_cast<unsigned long long>(t + 1),
                      to_string(fits[f].method).c_str());
        os << std::setw(width + 8) << buf;
      }
    os << '\n';
    for (arma::uword k = 0; k < K; ++k) {
      const std::string cov = entry(0, 0, 1, k).covariate;
      os << std::setw(width) << cov;
      for (arma::uword t = 1; t < T; ++t)
        for (std::size_t f = 0; f < fits.size(); ++f) {
          const auto& e = entry(f, m, t, k);
          std::snprintf(buf, sizeof(buf), "%.3f%s", e.estimate,
                        e.stars.c_str());
          os << std::setw(width + 8) << buf;
        }
      os << '\n';
      os << std::setw(width) << "";
      for (arma::uword t = 1; t < T; ++t)
        for (std::size_t f = 0; f < fits.size(); ++f) {
          const auto& e = entry(f, m, t, k);
          std::snprintf(buf, sizeof(buf), "(%.3f)", e.se);
          os << std::setw(width + 8) << buf;
        }
      os << '\n';
    }
    os << '\n';
  }
  os << "reference response class: 1\n";
  os << "*** p<0.01, ** p<0.05, * p<0.1\n";
}

void write_unit_posteriors_csv(const Dataset& data, const FitResult& fit,
                               std::ostream& os) {
  const arma::uword T = fit.dims.T;
  os << "row,group";
  for (arma::uword t = 0; t < T; ++t) os << ",p_class" << (t + 1);
  os << ",map_class\n";
  arma::mat P = fit.post.v.slice(0);
  for (arma::uword m = 1; m < fit.post.v.n_slices; ++m) P += fit.post.v.slice(m);
  for (arma::uword i = 0; i < data.n_units(); ++i) {
    const arma::uword src =
        data.source_row.is_empty() ? i : data.source_row[i];
    const arma::uword j = data.group[i];
    os << (src + 1) << ','
       << (data.group_names.size() == data.n_groups() ? data.group_names[j]
                                                      : std::to_string(j + 1));
    for (arma::uword t = 0; t < T; ++t) os << ',' << csv_double(P(i, t));
    os << ',' << (P.row(i).index_max() + 1) << '\n';
  }
}

void write_group_posteriors_csv(const Dataset& data, const FitResult& fit,
                                std::ostream& os) {
  const arma::uword M = fit.dims.M;
  os << "group";
  for (arma::uword m = 0; m < M; ++m) os << ",p_class" << (m + 1);
  os << ",map_class\n";
  for (arma::uword j = 0; j < data.n_groups(); ++j) {
    os << (data.group_names.size() == data.n_groups() ? data.group_names[j]
                                                      : std::to_string(j + 1));
    for (arma::uword m = 0; m < M; ++m)
      os << ',' << csv_double(fit.post.u(j, m));
    os << ',' << (fit.post.u.row(j).index_max() + 1) << '\n';
  }
}

void write_selection_csv(const SelectionTable& table, std::ostream& os) {
  os << "phase,T,M,loglik,npar,aic,bic_n,bic_j,entropy_r2_low,"
        "entropy_r2_high,failed\n";
  for (const auto& r : table.rows) {
    os << r.phase << ',' << r.T << ',' << r.M << ',';
    if (r.failed) {
      os << ",,,,,,," << 1 << '\n';
      continue;
    }
    os << csv_double(r.loglik) << ',' << r.npar << ',' << csv_double(r.aic)
       << ',' << csv_double(r.bic_n) << ',' << csv_double(r.bic_j) << ','
       << csv_double(r.r2_low) << ',' << csv_double(r.r2_high) << ",0\n";
  }
}

}  // namespace mlc
