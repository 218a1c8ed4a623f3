#include "skillnet/metrics.hpp"

#include <algorithm>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

std::vector<std::string> codepoints(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c >> 5) == 0x6) len = 2;
    else if ((c >> 4) == 0xe) len = 3;
    else if ((c >> 3) == 0x1e) len = 4;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw ContractError("accuracy: need equal nonempty prediction/label lists");
  }
  int correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return double(correct) / double(predictions.size());
}

size_t codepoint_count(const std::string& s) { return codepoints(s).size(); }

size_t edit_distance_codepoints(const std::string& a, const std::string& b) {
  const auto ref = codepoints(a);
  const auto hyp = codepoints(b);
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double cer(const std::string& reference, const std::string& hypothesis) {
  const size_t n = codepoint_count(reference);
  if (n == 0) throw ContractError("cer: empty reference");
  return double(edit_distance_codepoints(reference, hypothesis)) / double(n);
}

double recall_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& gold,
                   int k) {
  if (k <= 0) throw ContractError("recall_at_k: k must be positive");
  if (ranked.empty() || ranked.size() != gold.size()) {
    throw ContractError("recall_at_k: need equal nonempty query/gold lists");
  }
  int hit = 0;
  for (size_t q = 0; q < ranked.size(); ++q) {
    if (int(ranked[q].size()) < k) {
      throw ContractError("recall_at_k: ranked list " + std::to_string(q) + " shorter than k");
    }
    for (int i = 0; i < k; ++i) {
      if (ranked[q][size_t(i)] == gold[q]) {
        ++hit;
        break;
      }
    }
  }
  return double(hit) / double(ranked.size());
}

std::vector<int> greedy_ctc_decode_ids(const Tensor& frame_logits) {
  if (frame_logits.rank() != 2) throw ShapeError("greedy_ctc_decode: logits must be [T, V+1]");
  const int t_len = frame_logits.dim(0);
  const int classes = frame_logits.dim(1);
  const int blank = classes - 1;
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < t_len; ++t) {
    const double* row = frame_logits.values().data() + size_t(t) * classes;
    int arg = 0;
    for (int c = 1; c < classes; ++c) {
      if (row[c] > row[arg]) arg = c;  // ties keep the lowest id
    }
    if (arg != blank && arg != prev) out.push_back(arg);
    prev = arg;
  }
  return out;
}

std::string greedy_ctc_decode(const Tensor& frame_logits, const std::string& symbols) {
  std::string out;
  for (int id : greedy_ctc_decode_ids(frame_logits)) {
    if (id < 0 || id >= int(symbols.size())) {
      throw ContractError("greedy_ctc_decode: id " + std::to_string(id) +
                          " outside the symbol table");
    }
    out.push_back(symbols[size_t(id)]);
  }
  return out;
}

}  // namespace skillnet
