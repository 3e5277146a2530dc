#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctirb/classifier.hpp"
#include "ctirb/generation.hpp"

namespace ctirb {

double cosine_similarity(const std::vector<double>& m, const std::vector<double>& n);

/// L2-normalised mean of the token embedding rows (UNK rows included).
std::vector<double> embed_text(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               const nn::Tensor& embedding);

struct SimilarityEntry {
  std::string id;
  double score = 0.0;
};

struct SimilarityReport {
  std::vector<SimilarityEntry> entries;  // ascending by score, then id

  std::vector<double> scores() const;
  /// Linear-interpolated quantile, q in [0, 1]. Requires a non-empty report.
  double quantile(double q) const;
  double fraction_between(double lo, double hi) const;
};

/// Scores every FaN against its source record.
SimilarityReport similarity_distribution(const std::vector<FanRecord>& fans, const Corpus& sources,
                                         const Vocabulary& vocab, const nn::Tensor& embedding);

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> samples;  // sorted; kept for re-evaluation on other grids

  /// Raw Gaussian-kernel density at x.
  double evaluate(double x) const;
  double integral() const;
};

inline constexpr std::size_t kDensityGridPoints = 512;

/// h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to sd when IQR is 0.
double silverman_bandwidth(const std::vector<double>& samples);

/// Gaussian KDE on a 512-point grid over [min - 3h, max + 3h], rescaled so
/// the trapezoid integral is 1.
DensityEstimate kde(const std::vector<double>& samples, std::optional<double> bandwidth = std::nullopt);

/// KL(p || q) with both densities re-evaluated on a shared 512-point grid and
/// floored at 1e-12.
double kl_divergence(const DensityEstimate& p, const DensityEstimate& q);

/// W1 between empirical distributions via their quantile functions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

enum class SampleSource { real, fake };
std::string to_string(SampleSource source);

struct GradientProfile {
  std::vector<double> samples;      // pooled input-embedding gradient entries
  std::vector<double> mean_vector;  // per-dimension mean over all token rows
  double mean = 0.0;
  double variance = 0.0;            // population variance
  std::size_t records = 0;
  SampleSource source = SampleSource::real;
};

/// Input-embedding gradients of BCE at `label` for every record, pooled.
/// Records are visited in id order so the result does not depend on input order.
GradientProfile gradient_profile(const ClassifierModel& model, std::vector<TextRecord> dataset, double label,
                                 SampleSource source);

struct GradientAlignment {
  double cosine_similarity = 0.0;
  double cosine_distance = 0.0;
  double kl_fake_to_real = 0.0;
  double wasserstein = 0.0;
};

GradientAlignment gradient_alignment(const GradientProfile& real, const GradientProfile& fake);

}  // namespace ctirb
