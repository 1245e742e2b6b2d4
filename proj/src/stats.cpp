#include "titekit/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace titekit {

namespace {

constexpr int kMaxFractionTerms = 300;
constexpr double kFractionEps = 1e-14;
constexpr double kTiny = 1e-300;

// glibc's lgamma writes the global signgam; lgamma_r keeps concurrent
// simulator threads free of that race.
double lgamma_threadsafe(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

void require_shapes(double a, double b, const char* who) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::domain_error(std::string(who) + ": shape parameters must be positive, got a=" +
                            std::to_string(a) + " b=" + std::to_string(b));
  }
}

// Continued fraction for I_x(a,b), valid (fast) for x < (a+1)/(a+b+2).
double incbeta_fraction(double x, double a, double b) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxFractionTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;

    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kFractionEps) break;
  }
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  return std::exp(log_front) * h / a;
}

}  // namespace

double log_beta(double a, double b) {
  require_shapes(a, b, "log_beta");
  return lgamma_threadsafe(a) + lgamma_threadsafe(b) - lgamma_threadsafe(a + b);
}

double beta_cdf(double x, BetaParams p) {
  require_shapes(p.a, p.b, "beta_cdf");
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("beta_cdf: x must lie in [0, 1], got " + std::to_string(x));
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x > (p.a + 1.0) / (p.a + p.b + 2.0)) {
    return 1.0 - incbeta_fraction(1.0 - x, p.b, p.a);
  }
  return incbeta_fraction(x, p.a, p.b);
}

double interval_prob(double lo, double hi, BetaParams p) {
  if (!(lo >= 0.0) || !(hi <= 1.0) || !(lo < hi)) {
    throw std::domain_error("interval_prob: need 0 <= lo < hi <= 1");
  }
  const double mass = beta_cdf(hi, p) - beta_cdf(lo, p);
  return mass < 0.0 ? 0.0 : mass;
}

std::vector<double> pava_isotonic(std::span<const BinomialCell> cells) {
  if (cells.empty()) throw std::domain_error("pava_isotonic: empty input");

  struct Block {
    double events;
    double n;
    std::size_t count;
    double mean() const { return events / n; }
  };
  std::vector<Block> blocks;
  blocks.reserve(cells.size());
  for (const auto& cell : cells) {
    if (!(cell.n > 0.0) || cell.events < 0.0) {
      throw std::domain_error("pava_isotonic: each cell needs n > 0 and events >= 0");
    }
    blocks.push_back({cell.events, cell.n, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().events += top.events;
      blocks.back().n += top.n;
      blocks.back().count += top.count;
    }
  }

  std::vector<double> fitted;
  fitted.reserve(cells.size());
  for (const auto& block : blocks) fitted.insert(fitted.end(), block.count, block.mean());
  return fitted;
}

}  // namespace titekit
