#include "skillnet/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filterbank over DFT bins 0..frame_len/2.
std::vector<std::vector<double>> build_filters(int frame_len, int n_mels, double sample_rate) {
  const int bins = frame_len / 2 + 1;
  const double bin_hz = sample_rate / frame_len;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> points((size_t)(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    points[size_t(i)] = mel_to_hz(mel_max * double(i) / double(n_mels + 1));
  }
  std::vector<std::vector<double>> filters((size_t)(n_mels), std::vector<double>((size_t)(bins), 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = points[size_t(m)], mid = points[size_t(m) + 1], hi = points[size_t(m) + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      if (f <= lo || f >= hi) continue;
      filters[size_t(m)][size_t(b)] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return filters;
}

}  // namespace

int logmel_frame_count(int64_t samples, int frame_len, int hop) {
  if (samples < frame_len) return 0;
  return int((samples - frame_len) / hop + 1);
}

std::vector<double> mel_filter_centers(int frame_len, int n_mels, double sample_rate) {
  (void)frame_len;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers((size_t)(n_mels));
  for (int m = 0; m < n_mels; ++m) {
    centers[size_t(m)] = mel_to_hz(mel_max * double(m + 1) / double(n_mels + 1));
  }
  return centers;
}

FeatureFrames logmel_features(const std::vector<double>& waveform, int frame_len, int hop,
                              int n_mels, double floor_eps, double sample_rate) {
  const int frames = logmel_frame_count(int64_t(waveform.size()), frame_len, hop);
  if (frames < 1) {
    throw InputError("waveform of " + std::to_string(waveform.size()) +
                     " samples is shorter than one feature frame of " + std::to_string(frame_len));
  }
  const int bins = frame_len / 2 + 1;
  const auto filters = build_filters(frame_len, n_mels, sample_rate);

  std::vector<double> window((size_t)(frame_len));
  const double two_pi = 6.283185307179586476925286766559;
  for (int i = 0; i < frame_len; ++i) {
    window[size_t(i)] = 0.5 - 0.5 * std::cos(two_pi * i / (frame_len - 1));
  }

  FeatureFrames out;
  out.frame_len = frame_len;
  out.hop = hop;
  out.features = Mat(frames, n_mels);
  std::vector<double> buf((size_t)(frame_len));
  std::vector<double> power((size_t)(bins));
  for (int f = 0; f < frames; ++f) {
    const double* src = waveform.data() + size_t(f) * hop;
    for (int i = 0; i < frame_len; ++i) buf[size_t(i)] = src[i] * window[size_t(i)];
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < frame_len; ++n) {
        const double a = two_pi * k * n / frame_len;
        re += buf[size_t(n)] * std::cos(a);
        im -= buf[size_t(n)] * std::sin(a);
      }
      power[size_t(k)] = re * re + im * im;
    }
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int b = 0; b < bins; ++b) e += filters[size_t(m)][size_t(b)] * power[size_t(b)];
      out.features.at(f, m) = std::log(std::max(e, floor_eps));
    }
  }
  return out;
}

KmeansResult kmeans_fit(const Mat& rows, int k, int max_iterations, Rng& rng) {
  if (k < 1) throw ContractError("kmeans_fit: k must be >= 1");
  const int n = rows.rows, dim = rows.cols;
  // Count distinct rows; fewer than k cannot support k clusters.
  {
    std::set<std::vector<double>> distinct;
    for (int i = 0; i < n; ++i) {
      distinct.insert(std::vector<double>(rows.v.begin() + size_t(i) * dim,
                                          rows.v.begin() + size_t(i + 1) * dim));
      if (int(distinct.size()) >= k) break;
    }
    if (int(distinct.size()) < k) {
      throw ContractError("kmeans_fit: only " + std::to_string(distinct.size()) +
                          " distinct rows for k=" + std::to_string(k));
    }
  }

  auto sqdist = [&](const double* a, const double* b) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = a[j] - b[j];
      s += d * d;
    }
    return s;
  };

  // k-means++ seeding.
  Mat centroids(k, dim);
  std::vector<double> best((size_t)(n), 0.0);
  {
    const int first = rng.uniform_int(n);
    std::copy(rows.v.begin() + size_t(first) * dim, rows.v.begin() + size_t(first + 1) * dim,
              centroids.v.begin());
    for (int i = 0; i < n; ++i) {
      best[size_t(i)] = sqdist(rows.v.data() + size_t(i) * dim, centroids.v.data());
    }
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (double d : best) total += d;
      int pick = 0;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        for (int i = 0; i < n; ++i) {
          r -= best[size_t(i)];
          if (r <= 0.0) {
            pick = i;
            break;
          }
          pick = i;
        }
      } else {
        pick = rng.uniform_int(n);
      }
      std::copy(rows.v.begin() + size_t(pick) * dim, rows.v.begin() + size_t(pick + 1) * dim,
                centroids.v.begin() + size_t(c) * dim);
      for (int i = 0; i < n; ++i) {
        best[size_t(i)] =
            std::min(best[size_t(i)], sqdist(rows.v.data() + size_t(i) * dim,
                                             centroids.v.data() + size_t(c) * dim));
      }
    }
  }

  KmeansResult result;
  std::vector<int> owner((size_t)(n), 0);
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Assignment step (ties to the lowest id).
    double obj = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* row = rows.v.data() + size_t(i) * dim;
      int arg = 0;
      double bd = sqdist(row, centroids.v.data());
      for (int c = 1; c < k; ++c) {
        const double d = sqdist(row, centroids.v.data() + size_t(c) * dim);
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      owner[size_t(i)] = arg;
      obj += bd;
    }
    if (obj > prev_obj + 1e-9 * std::max(1.0, prev_obj)) {
      throw std::logic_error("kmeans_fit: objective increased");
    }
    result.objective.push_back(obj);
    result.iterations = iter + 1;
    const bool converged =
        prev_obj != std::numeric_limits<double>::infinity() &&
        (prev_obj - obj) <= 1e-6 * std::max(prev_obj, 1e-12);
    prev_obj = obj;

    // Update step.
    Mat sums(k, dim);
    std::vector<int> counts((size_t)(k), 0);
    for (int i = 0; i < n; ++i) {
      const double* row = rows.v.data() + size_t(i) * dim;
      double* dst = sums.v.data() + size_t(owner[size_t(i)]) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += row[j];
      ++counts[size_t(owner[size_t(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[size_t(c)] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = sqdist(rows.v.data() + size_t(i) * dim,
                                  centroids.v.data() + size_t(owner[size_t(i)]) * dim);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        std::copy(rows.v.begin() + size_t(far) * dim, rows.v.begin() + size_t(far + 1) * dim,
                  centroids.v.begin() + size_t(c) * dim);
        continue;
      }
      for (int j = 0; j < dim; ++j) {
        centroids.at(c, j) = sums.at(c, j) / counts[size_t(c)];
      }
    }
    if (converged) break;
  }
  result.model.centroids = std::move(centroids);
  return result;
}

std::vector<int> assign_clusters(const Mat& rows, const ClusterModel& model) {
  if (rows.cols != model.centroids.cols) {
    throw ContractError("assign_clusters: feature dim " + std::to_string(rows.cols) +
                        " vs centroid dim " + std::to_string(model.centroids.cols));
  }
  const int n = rows.rows, dim = rows.cols, k = model.k();
  std::vector<int> out((size_t)(n));
  for (int i = 0; i < n; ++i) {
    const double* row = rows.v.data() + size_t(i) * dim;
    int arg = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double* cen = model.centroids.v.data() + size_t(c) * dim;
      double d = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double x = row[j] - cen[j];
        d += x * x;
      }
      if (d < bd) {  // strict: ties keep the lowest id
        bd = d;
        arg = c;
      }
    }
    out[size_t(i)] = arg;
  }
  return out;
}

std::vector<int> downsample_labels(const std::vector<int>& labels) {
  std::vector<int> out;
  for (size_t i = 0; i < labels.size(); i += 2) out.push_back(labels[i]);
  return out;
}

}  // namespace skillnet
