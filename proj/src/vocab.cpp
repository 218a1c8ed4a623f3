#include "skillnet/vocab.hpp"

#include <fstream>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Length in bytes of the UTF-8 code point starting at s[i].
size_t codepoint_len(const std::string& s, size_t i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;  // stray continuation byte
}

}  // namespace

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  for (size_t i = 0; i < v.tokens_.size(); ++i) {
    const auto& t = v.tokens_[i];
    if (t.empty()) throw InputError("vocabulary line " + std::to_string(i) + " is empty");
    if (!v.ids_.emplace(t, int(i)).second) {
      throw InputError("duplicate vocabulary token '" + t + "'");
    }
    v.max_token_len_ = std::max(v.max_token_len_, t.size());
  }
  v.index_specials();
  return v;
}

void Vocab::index_specials() {
  auto need = [&](const char* name) {
    auto it = ids_.find(name);
    if (it == ids_.end()) {
      throw InputError(std::string("vocabulary is missing required special token ") + name);
    }
    return it->second;
  };
  pad_ = need("[PAD]");
  unk_ = need("[UNK]");
  mask_ = need("[MASK]");
  sep_ = need("[SEP]");
  cls_text_ = need("[CLS_text]");
  cls_image_ = need("[CLS_image]");
  cls_video_ = need("[CLS_video]");
  cls_code_ = need("[CLS_code]");
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? -1 : it->second;
}

bool Vocab::is_special(int id) const {
  return id == pad_ || id == unk_ || id == mask_ || id == sep_ || id == cls_text_ ||
         id == cls_image_ || id == cls_video_ || id == cls_code_;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    if (is_ws(text[i])) {
      ++i;
      continue;
    }
    size_t longest = std::min(max_token_len_, n - i);
    int matched = -1;
    size_t matched_len = 0;
    for (size_t len = longest; len >= 1; --len) {
      auto it = ids_.find(text.substr(i, len));
      if (it != ids_.end()) {
        matched = it->second;
        matched_len = len;
        break;
      }
    }
    if (matched >= 0) {
      out.push_back(matched);
      i += matched_len;
    } else {
      out.push_back(unk_);
      i += codepoint_len(text, i);
    }
  }
  return out;
}

}  // namespace skillnet
