#include "ctirb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ctirb/tokenize.hpp"

namespace ctirb {

double cosine_similarity(const std::vector<double>& m, const std::vector<double>& n) {
  if (m.size() != n.size()) throw ValidationError("cosine similarity: dimension mismatch");
  if (m.empty()) throw ValidationError("cosine similarity: empty vectors");
  long double dot = 0.0L, mm = 0.0L, nn = 0.0L;
  for (std::size_t i = 0; i < m.size(); ++i) {
    dot += static_cast<long double>(m[i]) * n[i];
    mm += static_cast<long double>(m[i]) * m[i];
    nn += static_cast<long double>(n[i]) * n[i];
  }
  if (mm == 0.0L || nn == 0.0L) throw ValidationError("cosine similarity: zero vector");
  const double cs = static_cast<double>(dot / (std::sqrt(mm) * std::sqrt(nn)));
  return std::clamp(cs, -1.0, 1.0);
}

std::vector<double> embed_text(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               const nn::Tensor& embedding) {
  const auto ids = vocab.encode(tokens, tokens.size());
  if (ids.empty()) throw ValidationError("cannot embed an empty token sequence");
  const std::size_t d = embedding.cols();
  std::vector<long double> sum(d, 0.0L);
  for (int id : ids) {
    const auto row = embedding.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < d; ++j) sum[j] += row[j];
  }
  long double norm = 0.0L;
  for (auto v : sum) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0L) throw ValidationError("text embeds to the zero vector");
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<double>(sum[j] / norm);
  return out;
}

std::vector<double> SimilarityReport::scores() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.score);
  return out;
}

double SimilarityReport::quantile(double q) const {
  if (entries.empty()) throw ValidationError("quantile of an empty report");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile must be in [0, 1]");
  const double pos = q * static_cast<double>(entries.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, entries.size() - 1);
  return entries[lo].score + (pos - static_cast<double>(lo)) * (entries[hi].score - entries[lo].score);
}

double SimilarityReport::fraction_between(double lo, double hi) const {
  if (entries.empty()) return 0.0;
  const auto count = std::count_if(entries.begin(), entries.end(),
                                   [&](const SimilarityEntry& e) { return e.score >= lo && e.score <= hi; });
  return static_cast<double>(count) / static_cast<double>(entries.size());
}

SimilarityReport similarity_distribution(const std::vector<FanRecord>& fans, const Corpus& sources,
                                         const Vocabulary& vocab, const nn::Tensor& embedding) {
  SimilarityReport report;
  for (const auto& fan : fans) {
    const TextRecord* source = sources.find(fan.source_id);
    if (source == nullptr) throw ValidationError("FaN '" + fan.id + "' has no source record '" + fan.source_id + "'");
    const auto m = embed_text(tokenize(fan.text), vocab, embedding);
    const auto n = embed_text(source->tokens(), vocab, embedding);
    report.entries.push_back({fan.id, cosine_similarity(m, n)});
  }
  std::sort(report.entries.begin(), report.entries.end(), [](const SimilarityEntry& a, const SimilarityEntry& b) {
    return a.score != b.score ? a.score < b.score : a.id < b.id;
  });
  return report;
}

namespace {

void require_finite(const std::vector<double>& samples, const char* what) {
  for (double v : samples) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite sample");
  }
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  long double total = 0.0L;
  for (std::size_t i = 1; i < x.size(); ++i) total += 0.5L * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return static_cast<double>(total);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

// Density on `grid`, rescaled to unit trapezoid mass.
std::vector<double> normalized_density(const DensityEstimate& e, const std::vector<double>& grid) {
  std::vector<double> y(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) y[i] = e.evaluate(grid[i]);
  const double mass = trapezoid(grid, y);
  if (mass > 0.0) {
    for (double& v : y) v /= mass;
  }
  return y;
}

}  // namespace

double DensityEstimate::evaluate(double x) const {
  if (samples.empty() || bandwidth <= 0.0) return 0.0;
  // samples are sorted; kernels beyond 10h contribute < 1e-21 each
  const double reach = 10.0 * bandwidth;
  const auto first = std::lower_bound(samples.begin(), samples.end(), x - reach);
  const auto last = std::upper_bound(first, samples.end(), x + reach);
  long double total = 0.0L;
  for (auto it = first; it != last; ++it) {
    const double z = (x - *it) / bandwidth;
    total += std::exp(-0.5 * z * z);
  }
  return static_cast<double>(total / (static_cast<long double>(samples.size()) * bandwidth *
                                      std::sqrt(2.0L * std::numbers::pi_v<long double>)));
}

double DensityEstimate::integral() const { return trapezoid(grid, density); }

double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2) throw ValidationError("bandwidth needs at least two samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  long double mean = 0.0L;
  for (double v : sorted) mean += v;
  mean /= static_cast<long double>(sorted.size());
  long double ss = 0.0L;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(sorted.size() - 1)));
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

DensityEstimate kde(const std::vector<double>& samples, std::optional<double> bandwidth) {
  if (samples.size() < 2) throw ValidationError("kde needs at least two samples");
  require_finite(samples, "kde");
  DensityEstimate e;
  e.samples = samples;
  std::sort(e.samples.begin(), e.samples.end());
  e.n_samples = samples.size();
  const double scale = std::max({1.0, std::abs(e.samples.front()), std::abs(e.samples.back())});
  if (bandwidth) {
    if (!(*bandwidth > 0.0) || !std::isfinite(*bandwidth)) throw ValidationError("kde bandwidth must be positive");
    e.bandwidth = *bandwidth;
  } else {
    e.bandwidth = silverman_bandwidth(e.samples);
    if (!(e.bandwidth > 1e-9 * scale)) {
      throw ValidationError("kde: samples are (nearly) identical; pass an explicit bandwidth");
    }
  }
  e.grid = linspace(e.samples.front() - 3.0 * e.bandwidth, e.samples.back() + 3.0 * e.bandwidth, kDensityGridPoints);
  e.density = normalized_density(e, e.grid);
  return e;
}

double kl_divergence(const DensityEstimate& p, const DensityEstimate& q) {
  if (p.grid.empty() || q.grid.empty()) throw ValidationError("kl divergence of an empty estimate");
  const double lo = std::min(p.grid.front(), q.grid.front());
  const double hi = std::max(p.grid.back(), q.grid.back());
  const auto grid = linspace(lo, hi, kDensityGridPoints);
  const auto pd = normalized_density(p, grid);
  const auto qd = normalized_density(q, grid);
  constexpr double floor = 1e-12;
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a = std::max(pd[i], floor);
    const double b = std::max(qd[i], floor);
    integrand[i] = a * std::log(a / b);
  }
  return trapezoid(grid, integrand);
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("wasserstein needs non-empty samples");
  require_finite(a, "wasserstein");
  require_finite(b, "wasserstein");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<long double>(a.size());
  const auto nb = static_cast<long double>(b.size());
  // Walk the merged breakpoints i/na and j/nb of the two quantile functions.
  long double total = 0.0L, u = 0.0L;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const long double next_a = static_cast<long double>(i + 1) / na;
    const long double next_b = static_cast<long double>(j + 1) / nb;
    const long double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(static_cast<long double>(a[i]) - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return static_cast<double>(total);
}

std::string to_string(SampleSource source) { return source == SampleSource::real ? "real" : "fake"; }

GradientProfile gradient_profile(const ClassifierModel& model, std::vector<TextRecord> dataset, double label,
                                 SampleSource source) {
  if (dataset.empty()) throw ValidationError("gradient profile of an empty dataset");
  std::sort(dataset.begin(), dataset.end(), [](const TextRecord& a, const TextRecord& b) { return a.id < b.id; });
  GradientProfile profile;
  profile.source = source;
  profile.records = dataset.size();
  std::vector<long double> dim_sum;
  std::size_t rows = 0;
  for (const auto& record : dataset) {
    const nn::Tensor g = model.input_gradient(record, label);
    if (!g.all_finite()) throw RuntimeFailure("non-finite gradient for record '" + record.id + "'");
    if (dim_sum.empty()) dim_sum.assign(g.cols(), 0.0L);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) dim_sum[c] += row[c];
    }
    rows += g.rows();
    profile.samples.insert(profile.samples.end(), g.values.begin(), g.values.end());
  }
  profile.mean_vector.resize(dim_sum.size());
  for (std::size_t c = 0; c < dim_sum.size(); ++c) {
    profile.mean_vector[c] = static_cast<double>(dim_sum[c] / static_cast<long double>(rows));
  }
  long double sum = 0.0L;
  for (double v : profile.samples) sum += v;
  const long double mean = sum / static_cast<long double>(profile.samples.size());
  long double ss = 0.0L;
  for (double v : profile.samples) ss += (v - mean) * (v - mean);
  profile.mean = static_cast<double>(mean);
  profile.variance = static_cast<double>(ss / static_cast<long double>(profile.samples.size()));
  return profile;
}

GradientAlignment gradient_alignment(const GradientProfile& real, const GradientProfile& fake) {
  if (real.mean_vector.size() != fake.mean_vector.size()) {
    throw ValidationError("gradient profiles come from models of different width");
  }
  GradientAlignment out;
  out.cosine_similarity = cosine_similarity(fake.mean_vector, real.mean_vector);
  out.cosine_distance = 1.0 - out.cosine_similarity;
  out.kl_fake_to_real = kl_divergence(kde(fake.samples), kde(real.samples));
  out.wasserstein = wasserstein_1d(fake.samples, real.samples);
  return out;
}

}  // namespace ctirb
