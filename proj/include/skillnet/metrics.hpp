#pragma once

#include <string>
#include <vector>

#include "skillnet/tensor.hpp"

namespace skillnet {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

size_t codepoint_count(const std::string& s);
size_t edit_distance_codepoints(const std::string& a, const std::string& b);

// Character error rate: Levenshtein distance over UTF-8 code points divided
// by the reference length. Reference must be nonempty.
double cer(const std::string& reference, const std::string& hypothesis);

// Fraction of queries whose gold id appears among the first k entries of its
// ranked candidate list.
double recall_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& gold,
                   int k);

// Best-path decoding: per-frame argmax, collapse repeats, strip blanks.
// Blank is the last logit column.
std::vector<int> greedy_ctc_decode_ids(const Tensor& frame_logits);
std::string greedy_ctc_decode(const Tensor& frame_logits, const std::string& symbols);

}  // namespace skillnet
