#include "f0lab/eval.hpp"

#include <cmath>
#include <ostream>

#include "f0lab/error.hpp"
#include "f0lab/kernels.hpp"
#include "f0lab/text_io.hpp"

namespace f0lab::eval {

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  require(!a.empty(), ErrorCode::mismatch, "rmse of empty vectors");
  require(a.size() == b.size(), ErrorCode::mismatch,
          "rmse length mismatch: ", a.size(), " vs ", b.size());
  return std::sqrt(kernels::sq_diff_sum(a.data(), b.data(), a.size()) /
                   double(a.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate) {
  require(a.size() == b.size(), ErrorCode::mismatch,
          "correlation length mismatch: ", a.size(), " vs ", b.size());
  std::size_t n = a.size();
  require(n >= 2, ErrorCode::mismatch,
          "correlation needs at least 2 values, got ", n);
  if (degenerate) *degenerate = false;

  double mean_a = kernels::sum(a.data(), n) / double(n);
  double mean_b = kernels::sum(b.data(), n) / double(n);
  std::vector<double> da(n), db(n);
  for (std::size_t i = 0; i < n; ++i) {
    da[i] = a[i] - mean_a;
    db[i] = b[i] - mean_b;
  }
  double var_a = kernels::sumsq(da.data(), n);
  double var_b = kernels::sumsq(db.data(), n);

  // A constant side leaves only summation round-off in the variance; the
  // threshold scales with the mean so quantized-but-varying inputs stay
  // well above it.
  auto floor_for = [n](double mean) {
    double t = 1e-9 * (1.0 + std::abs(mean));
    return double(n) * t * t;
  };
  if (var_a <= floor_for(mean_a) || var_b <= floor_for(mean_b)) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double c = kernels::dot(da.data(), db.data(), n) /
             std::sqrt(var_a * var_b);
  return std::clamp(c, -1.0, 1.0);
}

EvalReport evaluate(const std::vector<std::vector<corpus::Contour>>& pred,
                    const corpus::Corpus& truth) {
  require(pred.size() == truth.utterances.size(), ErrorCode::mismatch,
          "predictions cover ", pred.size(), " utterances, corpus has ",
          truth.utterances.size());

  EvalReport report;
  double syl_rmse_sum = 0.0, syl_corr_sum = 0.0;
  double utt_rmse_sum = 0.0, utt_corr_sum = 0.0;
  long long syl_corr_n = 0, utt_corr_n = 0;

  for (std::size_t u = 0; u < truth.utterances.size(); ++u) {
    const auto& utt = truth.utterances[u];
    require(pred[u].size() == utt.syllables.size(), ErrorCode::mismatch,
            "utterance ", utt.id, ": prediction has ", pred[u].size(),
            " syllables, truth has ", utt.syllables.size());

    std::vector<double> cat_pred, cat_truth;
    cat_pred.reserve(pred[u].size() * corpus::kContourPoints);
    cat_truth.reserve(pred[u].size() * corpus::kContourPoints);

    for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
      std::vector<double> p(pred[u][s].begin(), pred[u][s].end());
      std::vector<double> t(utt.syllables[s].contour.begin(),
                            utt.syllables[s].contour.end());
      cat_pred.insert(cat_pred.end(), p.begin(), p.end());
      cat_truth.insert(cat_truth.end(), t.begin(), t.end());

      syl_rmse_sum += rmse(p, t);
      bool degenerate = false;
      double c = pearson(p, t, &degenerate);
      if (degenerate) {
        ++report.syl_corr_excluded;
      } else {
        syl_corr_sum += c;
        ++syl_corr_n;
      }
      ++report.syl_count;
    }

    UtteranceMetrics m;
    m.id = utt.id;
    m.rmse = rmse(cat_pred, cat_truth);
    m.corr = pearson(cat_pred, cat_truth, &m.corr_degenerate);
    utt_rmse_sum += m.rmse;
    if (m.corr_degenerate) {
      ++report.utt_corr_excluded;
    } else {
      utt_corr_sum += m.corr;
      ++utt_corr_n;
    }
    ++report.utt_count;
    report.per_utterance.push_back(std::move(m));
  }

  if (report.syl_count > 0)
    report.syl_rmse = syl_rmse_sum / double(report.syl_count);
  if (syl_corr_n > 0) report.syl_corr = syl_corr_sum / double(syl_corr_n);
  if (report.utt_count > 0)
    report.utt_rmse = utt_rmse_sum / double(report.utt_count);
  if (utt_corr_n > 0) report.utt_corr = utt_corr_sum / double(utt_corr_n);
  return report;
}

void write_report(const EvalReport& report, std::ostream& out) {
  out << "syl_rmse " << textio::format_double(report.syl_rmse) << "\n";
  out << "syl_corr " << textio::format_double(report.syl_corr) << "\n";
  out << "utt_rmse " << textio::format_double(report.utt_rmse) << "\n";
  out << "utt_corr " << textio::format_double(report.utt_corr) << "\n";
  out << "syl_count " << report.syl_count << "\n";
  out << "utt_count " << report.utt_count << "\n";
  out << "syl_corr_excluded " << report.syl_corr_excluded << "\n";
  out << "utt_corr_excluded " << report.utt_corr_excluded << "\n";
}

}  // namespace f0lab::eval
