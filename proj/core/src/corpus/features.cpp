#include "deskasr/corpus/features.hpp"

#include <algorithm>

#include "deskasr/errors.hpp"

namespace deskasr::corpus {

std::size_t FeatureSpec::fused_dim() const {
  std::size_t d = 0;
  for (const auto& s : streams) d += s.dim * static_cast<std::size_t>(s.delta_order + 1);
  return d;
}

namespace {

// d_t = sum_n n*(x[t+n] - x[t-n]) / (2 * sum_n n^2), indices clamped to the
// sequence (edge replication).
std::vector<double> delta_pass(const std::vector<double>& x, std::size_t T,
                               std::size_t F, std::size_t window) {
  double denom = 0.0;
  for (std::size_t n = 1; n <= window; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  std::vector<double> out(T * F, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 1; n <= window; ++n) {
      const std::size_t hi = std::min(t + n, T - 1);
      const std::size_t lo = t >= n ? t - n : 0;
      for (std::size_t f = 0; f < F; ++f) {
        out[t * F + f] += static_cast<double>(n) * (x[hi * F + f] - x[lo * F + f]);
      }
    }
    for (std::size_t f = 0; f < F; ++f) out[t * F + f] /= denom;
  }
  return out;
}

}  // namespace

std::vector<double> compute_deltas(const std::vector<double>& frames, std::size_t T,
                                   std::size_t F, int order, std::size_t window) {
  if (window < 1) throw ConfigError("compute_deltas: window must be >= 1");
  if (order != 1 && order != 2) throw ConfigError("compute_deltas: order must be 1 or 2");
  std::vector<double> d1 = delta_pass(frames, T, F, window);
  if (order == 1) return d1;
  std::vector<double> d2 = delta_pass(d1, T, F, window);
  std::vector<double> out(T * 2 * F);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(d1.begin() + t * F, F, out.begin() + t * 2 * F);
    std::copy_n(d2.begin() + t * F, F, out.begin() + t * 2 * F + F);
  }
  return out;
}

std::vector<double> fuse_features(const Utterance& utt, const FeatureSpec& spec) {
  const std::size_t T = utt.T;
  const std::size_t out_dim = spec.fused_dim();
  std::vector<double> out(T * out_dim);
  std::size_t col = 0;
  for (const auto& s : spec.streams) {
    if (s.name == "frames") {
      if (s.dim != utt.F) {
        throw SpecError("fuse_features: stream 'frames' declared dim " +
                        std::to_string(s.dim) + " but utterance has " +
                        std::to_string(utt.F));
      }
      for (std::size_t t = 0; t < T; ++t) {
        std::copy_n(utt.frames.begin() + t * utt.F, utt.F,
                    out.begin() + t * out_dim + col);
      }
      col += s.dim;
      if (s.delta_order > 0) {
        auto d = compute_deltas(utt.frames, T, utt.F, s.delta_order, spec.delta_window);
        const std::size_t dd = s.dim * static_cast<std::size_t>(s.delta_order);
        for (std::size_t t = 0; t < T; ++t) {
          std::copy_n(d.begin() + t * dd, dd, out.begin() + t * out_dim + col);
        }
        col += dd;
      }
    } else if (s.name == "speaker") {
      if (s.dim != utt.speaker_vector.size()) {
        throw SpecError("fuse_features: stream 'speaker' declared dim " +
                        std::to_string(s.dim) + " but utterance vector has " +
                        std::to_string(utt.speaker_vector.size()));
      }
      for (std::size_t t = 0; t < T; ++t) {
        std::copy_n(utt.speaker_vector.begin(), s.dim, out.begin() + t * out_dim + col);
      }
      col += s.dim;
    } else {
      throw SpecError("fuse_features: unknown stream '" + s.name + "'");
    }
  }
  return out;
}

std::vector<Subsequence> make_subsequences(const std::vector<double>& frames,
                                           const std::vector<int>& labels,
                                           std::size_t T, std::size_t F,
                                           std::size_t len) {
  if (len < 1) throw ConfigError("make_subsequences: len must be >= 1");
  const std::size_t n_windows = (T + len - 1) / len;
  std::vector<Subsequence> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    Subsequence s;
    s.start = w * len;
    s.real_frames = std::min(len, T - s.start);
    s.frames.resize(len * F);
    s.labels.resize(len);
    s.mask.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t src = i < s.real_frames ? s.start + i : T - 1;
      std::copy_n(frames.begin() + src * F, F, s.frames.begin() + i * F);
      s.labels[i] = labels.empty() ? 0 : labels[src];
      s.mask[i] = i < s.real_frames ? 1.0 : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> utt_to_channels(const Utterance& utt, int delta_order,
                                    std::size_t delta_window) {
  const std::size_t T = utt.T, F = utt.F;
  const std::size_t C = 1 + static_cast<std::size_t>(delta_order);
  std::vector<double> out(C * F * T);
  auto put = [&](std::size_t c, const std::vector<double>& src, std::size_t col0) {
    // src rows are T x (k*F); pick the F columns starting at col0.
    const std::size_t src_dim = src.size() / T;
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < T; ++t) {
        out[(c * F + f) * T + t] = src[t * src_dim + col0 + f];
      }
    }
  };
  put(0, utt.frames, 0);
  if (delta_order > 0) {
    auto d = compute_deltas(utt.frames, T, F, delta_order, delta_window);
    for (int k = 0; k < delta_order; ++k) {
      put(1 + static_cast<std::size_t>(k), d, static_cast<std::size_t>(k) * F);
    }
  }
  return out;
}

}  // namespace deskasr::corpus
