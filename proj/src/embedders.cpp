#include "skillnet/embedders.hpp"

#include <algorithm>
#include <cmath>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

Tensor init_table(int rows, int cols, Rng& rng, double std = 0.02) {
  std::vector<double> v((size_t)(rows) * cols);
  for (auto& x : v) x = rng.truncated_normal(std);
  return Tensor::from_values({rows, cols}, std::move(v), true);
}

Tensor init_tensor(std::vector<int> dims, Rng& rng, double std = 0.02) {
  int64_t n = 1;
  for (int d : dims) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.truncated_normal(std);
  return Tensor::from_values(std::move(dims), std::move(v), true);
}

std::vector<int> iota_ids(int n, int start = 0) {
  std::vector<int> ids((size_t)(n));
  for (int i = 0; i < n; ++i) ids[size_t(i)] = start + i;
  return ids;
}

}  // namespace

TokenizedInput build_text_ids(const Vocab& vocab, const std::string& text,
                              const std::string* pair, int max_len) {
  TokenizedInput out;
  out.ids.push_back(vocab.cls_text());
  out.segments.push_back(0);
  for (int id : vocab.tokenize(text)) {
    out.ids.push_back(id);
    out.segments.push_back(0);
  }
  if (pair) {
    out.ids.push_back(vocab.sep());
    out.segments.push_back(0);
    for (int id : vocab.tokenize(*pair)) {
      out.ids.push_back(id);
      out.segments.push_back(1);
    }
  }
  if (int(out.ids.size()) > max_len) {
    out.ids.resize((size_t)(max_len));
    out.segments.resize((size_t)(max_len));
  }
  return out;
}

TokenizedInput build_code_ids(const Vocab& vocab, const std::string& code,
                              const std::string* paired_text, int max_len, int text_limit) {
  TokenizedInput out;
  out.ids.push_back(vocab.cls_code());
  out.segments.push_back(0);
  if (paired_text) {
    auto text_ids = vocab.tokenize(*paired_text);
    if (int(text_ids.size()) > text_limit) text_ids.resize((size_t)(text_limit));
    for (int id : text_ids) {
      out.ids.push_back(id);
      out.segments.push_back(0);
    }
    out.ids.push_back(vocab.sep());
    out.segments.push_back(0);
  }
  auto code_ids = vocab.tokenize(code);
  const int room = max_len - int(out.ids.size());
  if (room < 0) {
    throw InputError("code input overflows max length " + std::to_string(max_len) +
                     " before any code tokens fit");
  }
  if (int(code_ids.size()) > room) code_ids.resize((size_t)(room));  // code side truncated first
  for (int id : code_ids) {
    out.ids.push_back(id);
    out.segments.push_back(1);
  }
  return out;
}

// ---------------------------------------------------------------------------

TokenEmbedder::TokenEmbedder(Skill modality, int vocab_size, int max_positions, int dim, Rng& rng)
    : token_table(init_table(vocab_size, dim, rng)),
      position_table(init_table(max_positions, dim, rng)),
      segment_table(init_table(2, dim, rng)),
      modality_(modality),
      max_positions_(max_positions),
      dim_(dim) {}

EmbeddedSequence TokenEmbedder::embed(const TokenizedInput& in, int pad_id, int pad_to) const {
  if (in.ids.empty()) throw ContractError("embed: empty token sequence");
  if (in.ids.size() != in.segments.size()) {
    throw ContractError("embed: ids and segments length mismatch");
  }
  std::vector<int> ids = in.ids;
  std::vector<int> segs = in.segments;
  const int raw = int(ids.size());
  if (pad_to > raw) {
    ids.resize((size_t)(pad_to), pad_id);
    segs.resize((size_t)(pad_to), 0);
  }
  if (int(ids.size()) > max_positions_) {
    throw ContractError("embed: sequence of " + std::to_string(ids.size()) +
                        " tokens exceeds max positions " + std::to_string(max_positions_));
  }
  const int n = int(ids.size());
  Tensor tok = rows_lookup(token_table, ids);
  Tensor pos = rows_lookup(position_table, iota_ids(n));
  Tensor seg = rows_lookup(segment_table, segs);
  EmbeddedSequence out;
  out.tokens = add(add(tok, pos), seg);
  out.pad.assign((size_t)(n), 0);
  for (int i = raw; i < n; ++i) out.pad[size_t(i)] = 1;
  out.modality = modality_;
  out.cls_index = 0;
  out.raw_len = raw;
  return out;
}

NamedParams TokenEmbedder::params(const std::string& prefix) const {
  return {{prefix + ".tok", token_table},
          {prefix + ".pos", position_table},
          {prefix + ".seg", segment_table}};
}

// ---------------------------------------------------------------------------

const std::vector<int>& SoundEmbedder::kernels() {
  static const std::vector<int> k = {10, 3, 3, 3, 3, 2, 2};
  return k;
}

const std::vector<int>& SoundEmbedder::strides() {
  static const std::vector<int> s = {5, 2, 2, 2, 2, 2, 2};
  return s;
}

int SoundEmbedder::frame_count(int64_t samples) {
  int64_t len = samples;
  for (size_t i = 0; i < kernels().size(); ++i) {
    if (len < kernels()[i]) return 0;
    len = (len - kernels()[i]) / strides()[i] + 1;
  }
  return int(len);
}

SoundEmbedder::SoundEmbedder(int channels, int dim, int max_positions, Rng& rng)
    : channels_(channels), dim_(dim), max_positions_(max_positions) {
  const auto& ks = kernels();
  for (size_t i = 0; i < ks.size(); ++i) {
    const int in_ch = i == 0 ? 1 : channels;
    conv_w.push_back(init_tensor({channels, in_ch, ks[i]}, rng));
    conv_b.push_back(Tensor::zeros({channels}, true));
  }
  proj_w = init_tensor({dim, channels, 1}, rng);
  proj_b = Tensor::zeros({dim}, true);
  position_table = init_table(max_positions, dim, rng);
  mask_embedding = init_table(1, dim, rng);
}

EmbeddedSequence SoundEmbedder::embed(const std::vector<double>& waveform,
                                      const std::vector<uint8_t>* masked_frames) const {
  if (int(waveform.size()) < kMinSamples) {
    throw InputError("waveform of " + std::to_string(waveform.size()) +
                     " samples is shorter than the receptive field of " +
                     std::to_string(kMinSamples));
  }
  Tensor x = Tensor::from_values({1, int(waveform.size())}, waveform);
  for (size_t i = 0; i < conv_w.size(); ++i) {
    x = gelu(conv1d(x, conv_w[i], conv_b[i], strides()[i]));
  }
  x = conv1d(x, proj_w, proj_b, 1);  // [d, frames]
  int frames = x.dim(1);
  if (frames > max_positions_) {
    x = slice(x, 1, 0, max_positions_);
    frames = max_positions_;
  }
  Tensor seq = transpose2d(x);  // [frames, d]
  seq = add(seq, rows_lookup(position_table, iota_ids(frames)));
  if (masked_frames) {
    if (int(masked_frames->size()) != frames) {
      throw ContractError("mask flags for " + std::to_string(masked_frames->size()) +
                          " frames, embedder produced " + std::to_string(frames));
    }
    std::vector<double> keep((size_t)(frames)), drop((size_t)(frames));
    for (int i = 0; i < frames; ++i) {
      drop[size_t(i)] = (*masked_frames)[size_t(i)] ? 1.0 : 0.0;
      keep[size_t(i)] = 1.0 - drop[size_t(i)];
    }
    Tensor tiled = rows_lookup(mask_embedding, std::vector<int>((size_t)(frames), 0));
    seq = add(mul_colvec(seq, Tensor::from_values({frames}, keep)),
              mul_colvec(tiled, Tensor::from_values({frames}, drop)));
  }
  EmbeddedSequence out;
  out.tokens = seq;
  out.pad.assign((size_t)(frames), 0);
  out.modality = Skill::sound;
  out.raw_len = frames;
  return out;
}

NamedParams SoundEmbedder::params(const std::string& prefix) const {
  NamedParams p;
  for (size_t i = 0; i < conv_w.size(); ++i) {
    p.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", conv_w[i]);
    p.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]);
  }
  p.emplace_back(prefix + ".proj.w", proj_w);
  p.emplace_back(prefix + ".proj.b", proj_b);
  p.emplace_back(prefix + ".pos", position_table);
  p.emplace_back(prefix + ".mask_emb", mask_embedding);
  return p;
}

// ---------------------------------------------------------------------------

ImageEmbedder::ImageEmbedder(int patch, int dim, int max_positions, Rng& rng)
    : conv_w(init_tensor({dim, 3, patch, patch}, rng)),
      conv_b(Tensor::zeros({dim}, true)),
      position_table(init_table(max_positions, dim, rng)),
      cls(init_table(1, dim, rng)),
      patch_(patch),
      dim_(dim) {}

EmbeddedSequence ImageEmbedder::embed(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("image must be [3, H, W], got " + dims_str(image.dims()));
  }
  const int h = image.dim(1), w = image.dim(2);
  if (h % patch_ != 0 || w % patch_ != 0) {
    throw ShapeError("image " + dims_str(image.dims()) + " not divisible by patch " +
                     std::to_string(patch_));
  }
  std::vector<double> px = image.values();
  const size_t plane = size_t(h) * w;
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < plane; ++i) {
      px[size_t(c) * plane + i] = (px[size_t(c) * plane + i] - mean[size_t(c)]) / stddev[size_t(c)];
    }
  }
  Tensor norm = Tensor::from_values(image.dims(), std::move(px));
  Tensor grid = conv2d(norm, conv_w, conv_b, patch_, patch_);  // [d, H/P, W/P]
  const int n = grid.dim(1) * grid.dim(2);
  Tensor patches = transpose2d(reshape(grid, {dim_, n}));      // [n, d]
  patches = add(patches, rows_lookup(position_table, iota_ids(n)));
  EmbeddedSequence out;
  out.tokens = concat({cls, patches}, 0);
  out.pad.assign((size_t)(n) + 1, 0);
  out.modality = Skill::image;
  out.cls_index = 0;
  out.raw_len = n + 1;
  return out;
}

NamedParams ImageEmbedder::params(const std::string& prefix) const {
  return {{prefix + ".conv.w", conv_w},
          {prefix + ".conv.b", conv_b},
          {prefix + ".pos", position_table},
          {prefix + ".cls", cls}};
}

// ---------------------------------------------------------------------------

VideoEmbedder::VideoEmbedder(int tube_t, int tube_h, int tube_w, int dim, int pos_t, int pos_h,
                             int pos_w, Rng& rng)
    : conv_w(init_tensor({dim, 3, tube_t, tube_h, tube_w}, rng)),
      conv_b(Tensor::zeros({dim}, true)),
      pos_time(init_table(pos_t, dim, rng)),
      pos_height(init_table(pos_h, dim, rng)),
      pos_width(init_table(pos_w, dim, rng)),
      cls(init_table(1, dim, rng)),
      tube_t_(tube_t),
      tube_h_(tube_h),
      tube_w_(tube_w),
      dim_(dim) {}

EmbeddedSequence VideoEmbedder::embed(const Tensor& video) const {
  if (video.rank() != 4 || video.dim(0) != 3) {
    throw ShapeError("video must be [3, T, H, W], got " + dims_str(video.dims()));
  }
  const int t = video.dim(1), h = video.dim(2), w = video.dim(3);
  if (t % tube_t_ != 0 || h % tube_h_ != 0 || w % tube_w_ != 0) {
    throw ShapeError("video " + dims_str(video.dims()) + " not divisible by tube [" +
                     std::to_string(tube_t_) + "," + std::to_string(tube_h_) + "," +
                     std::to_string(tube_w_) + "]");
  }
  std::vector<double> px = video.values();
  const size_t plane = size_t(t) * h * w;
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < plane; ++i) {
      px[size_t(c) * plane + i] = (px[size_t(c) * plane + i] - mean[size_t(c)]) / stddev[size_t(c)];
    }
  }
  Tensor norm = Tensor::from_values(video.dims(), std::move(px));
  Tensor grid = conv3d(norm, conv_w, conv_b, tube_t_, tube_h_, tube_w_);  // [d, T/t, H/h, W/w]
  const int nt = grid.dim(1), nh = grid.dim(2), nw = grid.dim(3);
  const int n = nt * nh * nw;
  Tensor tubes = transpose2d(reshape(grid, {dim_, n}));  // [n, d], t-major then h then w
  std::vector<int> t_ids((size_t)(n)), h_ids((size_t)(n)), w_ids((size_t)(n));
  for (int a = 0; a < nt; ++a) {
    for (int b = 0; b < nh; ++b) {
      for (int c = 0; c < nw; ++c) {
        const size_t i = size_t(a) * nh * nw + size_t(b) * nw + c;
        t_ids[i] = a;
        h_ids[i] = b;
        w_ids[i] = c;
      }
    }
  }
  tubes = add(tubes, add(rows_lookup(pos_time, t_ids),
                         add(rows_lookup(pos_height, h_ids), rows_lookup(pos_width, w_ids))));
  EmbeddedSequence out;
  out.tokens = concat({cls, tubes}, 0);
  out.pad.assign((size_t)(n) + 1, 0);
  out.modality = Skill::video;
  out.cls_index = 0;
  out.raw_len = n + 1;
  return out;
}

NamedParams VideoEmbedder::params(const std::string& prefix) const {
  return {{prefix + ".conv.w", conv_w}, {prefix + ".conv.b", conv_b},
          {prefix + ".pos_t", pos_time}, {prefix + ".pos_h", pos_height},
          {prefix + ".pos_w", pos_width}, {prefix + ".cls", cls}};
}

}  // namespace skillnet
