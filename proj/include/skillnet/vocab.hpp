#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace skillnet {

// Token table loaded from a plain text file, one token per line, line number
// is the id. Greedy longest-match subword tokenization.
class Vocab {
 public:
  static Vocab load(const std::string& path);
  static Vocab from_tokens(std::vector<std::string> tokens);

  int size() const { return int(tokens_.size()); }
  const std::string& token(int id) const { return tokens_[size_t(id)]; }
  int id(const std::string& token) const;  // -1 when absent

  int pad() const { return pad_; }
  int unk() const { return unk_; }
  int mask() const { return mask_; }
  int sep() const { return sep_; }
  int cls_text() const { return cls_text_; }
  int cls_image() const { return cls_image_; }
  int cls_video() const { return cls_video_; }
  int cls_code() const { return cls_code_; }

  bool is_special(int id) const;

  // Greedy longest-match over the table. ASCII whitespace separates matches
  // and is never part of a token; an unmatched span becomes [UNK] and skips
  // one UTF-8 code point.
  std::vector<int> tokenize(const std::string& text) const;

 private:
  void index_specials();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  size_t max_token_len_ = 0;
  int pad_ = -1, unk_ = -1, mask_ = -1, sep_ = -1;
  int cls_text_ = -1, cls_image_ = -1, cls_video_ = -1, cls_code_ = -1;
};

}  // namespace skillnet
