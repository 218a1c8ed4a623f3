#pragma once

#include <vector>

#include "skillnet/mat.hpp"
#include "skillnet/rng.hpp"

namespace skillnet {

// Frame-level acoustic features used as k-means input for the offline
// pseudo-label pipeline.
struct FeatureFrames {
  int frame_len = 400;  // samples per frame
  int hop = 160;        // samples between frame starts
  Mat features;         // [frames, n_mels]
};

int logmel_frame_count(int64_t samples, int frame_len = 400, int hop = 160);

// Hann window, magnitude spectrum by direct DFT, triangular mel filterbank,
// log with a floor. 16 kHz input assumed.
FeatureFrames logmel_features(const std::vector<double>& waveform, int frame_len = 400,
                              int hop = 160, int n_mels = 26, double floor_eps = 1e-10,
                              double sample_rate = 16000.0);

// Center frequencies (Hz) of the triangular filters, for tests.
std::vector<double> mel_filter_centers(int frame_len = 400, int n_mels = 26,
                                       double sample_rate = 16000.0);

struct ClusterModel {
  Mat centroids;  // [K, dim]
  int k() const { return centroids.rows; }
};

struct KmeansResult {
  ClusterModel model;
  std::vector<double> objective;  // per-iteration sum of squared distances
  int iterations = 0;
};

// Lloyd iterations from k-means++ seeding. Stops at the iteration cap or when
// the relative objective change drops below 1e-6. The objective is asserted
// nonincreasing every iteration.
KmeansResult kmeans_fit(const Mat& rows, int k, int max_iterations, Rng& rng);

// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
std::vector<int> assign_clusters(const Mat& rows, const ClusterModel& model);

// Every second label, aligning the 10 ms feature hop with the 20 ms encoder
// frame rate.
std::vector<int> downsample_labels(const std::vector<int>& labels);

}  // namespace skillnet
