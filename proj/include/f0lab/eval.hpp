#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "f0lab/corpus.hpp"

namespace f0lab::eval {

struct UtteranceMetrics {
  std::string id;
  double rmse = 0.0;
  double corr = 0.0;
  bool corr_degenerate = false;
};

struct EvalReport {
  double syl_rmse = 0.0;
  double syl_corr = 0.0;
  double utt_rmse = 0.0;
  double utt_corr = 0.0;
  long long syl_count = 0;
  long long utt_count = 0;
  // Units whose correlation is undefined (a constant side); they are
  // left out of the correlation averages and counted here.
  long long syl_corr_excluded = 0;
  long long utt_corr_excluded = 0;
  std::vector<UtteranceMetrics> per_utterance;
};

double rmse(const std::vector<double>& a, const std::vector<double>& b);

// Pearson product-moment correlation. A constant input has no defined
// correlation; the result is then 0 and *degenerate is set.
double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate = nullptr);

// Syllable level: metric per 10-point syllable, averaged over syllables.
// Utterance level: metric per concatenated utterance, averaged over
// utterances. Averages are unweighted; everything is in Hz.
EvalReport evaluate(const std::vector<std::vector<corpus::Contour>>& pred,
                    const corpus::Corpus& truth);

// Flat key/value block, one "key value" pair per line.
void write_report(const EvalReport& report, std::ostream& out);

}  // namespace f0lab::eval
