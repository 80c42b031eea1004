#include "dexfm/dein.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dexfm/tape.hpp"

namespace dexfm {

DeinConfig DeinConfig::uniform(std::size_t depth, std::size_t maps, bool attention,
                               std::size_t attention_hidden) {
  DeinConfig c;
  c.depth = depth;
  c.feature_maps.assign(depth, maps);
  c.attention = attention;
  c.attention_hidden = attention_hidden;
  return c;
}

void DeinConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("dein: depth must be >= 1");
  if (feature_maps.size() != depth)
    throw std::invalid_argument("dein: need one feature-map count per layer");
  for (std::size_t e : feature_maps)
    if (e < 1) throw std::invalid_argument("dein: feature-map count must be >= 1");
  if (attention) {
    for (std::size_t e : feature_maps)
      if (e != feature_maps[0])
        throw std::invalid_argument(
            "dein: the attention weight matrix is shared across layers, which requires equal "
            "feature-map counts");
    if (attention_hidden < 1) throw std::invalid_argument("dein: attention hidden size must be >= 1");
  }
}

std::size_t DeinConfig::output_size() const {
  std::size_t total = 0;
  for (std::size_t e : feature_maps) total += e;
  return total;
}

Tensor cin_layer(const Tensor& xk, const Tensor& x0, const Tensor& weights) {
  return cin_forward(xk, x0, weights);
}

Tensor sum_pool(const Tensor& xk) {
  if (xk.rank() != 2) throw std::invalid_argument("sum_pool: expected matrix");
  Tensor out({xk.rows()});
  for (std::size_t l = 0; l < xk.rows(); ++l) {
    double acc = 0.0;
    for (std::size_t j = 0; j < xk.cols(); ++j) acc += xk.at(l, j);
    out[l] = acc;
  }
  return out;
}

std::pair<Tensor, HiddenState> dein_forward(const Tensor& x0, std::span<const Tensor> weights,
                                            const DeinConfig& config) {
  config.validate();
  if (weights.size() != config.depth)
    throw std::invalid_argument("dein_forward: need one weight block per layer");
  HiddenState state;
  const Tensor* prev = &x0;
  for (std::size_t k = 0; k < config.depth; ++k) {
    state.layers.push_back(cin_layer(*prev, x0, weights[k]));
    state.pooled.push_back(sum_pool(state.layers.back()));
    prev = &state.layers.back();
  }
  Tensor out({config.output_size()});
  std::size_t off = 0;
  for (const Tensor& s : state.pooled) {
    std::copy(s.data.begin(), s.data.end(), out.data.begin() + off);
    off += s.numel();
  }
  return {std::move(out), std::move(state)};
}

double diversity(const Tensor& xk) {
  if (xk.rank() != 2) throw std::invalid_argument("diversity: expected matrix");
  const std::size_t e = xk.rows(), d = xk.cols();
  std::vector<double> centroid(d, 0.0);
  for (std::size_t l = 0; l < e; ++l)
    for (std::size_t j = 0; j < d; ++j) centroid[j] += xk.at(l, j);
  for (double& c : centroid) c /= static_cast<double>(e);
  double acc = 0.0;
  for (std::size_t l = 0; l < e; ++l) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = xk.at(l, j) - centroid[j];
      sq += diff * diff;
    }
    acc += std::sqrt(sq + kSqrtEps);
  }
  return acc / static_cast<double>(e);
}

std::vector<double> attention_weights(std::span<const Tensor> pooled, const Tensor& h,
                                      const Tensor& w, const Tensor& b) {
  if (pooled.empty()) throw std::invalid_argument("attention: no pooled vectors");
  const std::size_t e = pooled[0].numel();
  const std::size_t a = h.numel();
  if (w.rank() != 2 || w.rows() != a || w.cols() != e || b.numel() != a)
    throw std::invalid_argument("attention: parameter shapes inconsistent");
  std::vector<double> scores;
  scores.reserve(pooled.size());
  for (const Tensor& s : pooled) {
    if (s.numel() != e)
      throw std::invalid_argument("attention: the shared weight matrix requires equal pooled lengths");
    double score = 0.0;
    for (std::size_t i = 0; i < a; ++i) {
      double pre = 0.0;
      for (std::size_t j = 0; j < e; ++j) pre += w.at(i, j) * s[j];
      pre += b[i];
      if (pre > 0.0) score += h[i] * pre;
    }
    scores.push_back(score);
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double& v : scores) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : scores) v /= denom;
  return scores;
}

DiversityReport weighted_diversity(const HiddenState& state,
                                   const std::optional<std::vector<double>>& attention) {
  DiversityReport report;
  const std::size_t k = state.layers.size();
  if (attention && attention->size() != k)
    throw std::invalid_argument("weighted_diversity: one attention weight per layer required");
  report.raw.reserve(k);
  report.weights.reserve(k);
  report.weighted.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double divs = diversity(state.layers[i]);
    const double a = attention ? (*attention)[i] : 1.0;
    report.raw.push_back(divs);
    report.weights.push_back(a);
    report.weighted.push_back(a * divs);
    report.total += a * divs;
  }
  return report;
}

}  // namespace dexfm
