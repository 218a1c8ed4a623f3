#pragma once

#include <string>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

// One dataset record. Payload is either inline (text/code) or a headerless
// binary file whose dims travel in the manifest line. Paired text for
// retrieval-style records rides along as `caption`.
struct Record {
  std::string id;
  Skill modality = Skill::text;
  std::string split;
  std::string text;        // inline text or code body
  std::string file;        // relative payload path (sound pcm, image/video f32)
  std::vector<int> dims;   // payload dims for tensor dumps
  int label = -1;          // classification target
  std::string ref;         // ASR reference transcript
  std::string caption;     // paired description for retrieval records
};

std::string escape_field(const std::string& s);
std::string unescape_field(const std::string& s);

// Tab-separated manifest: id, modality, split, payload, meta.
//   payload: "text:...", "code:...", or "file:rel/path[;dims=AxBxC]"
//   meta:    "label:3", "ref:abc", "text:caption", or "-"
class Dataset {
 public:
  static Dataset load(const std::string& manifest_path);

  const std::vector<Record>& records() const { return records_; }
  std::vector<const Record*> select(Skill modality, const std::string& split) const;
  const std::string& dir() const { return dir_; }

 private:
  std::vector<Record> records_;
  std::string dir_;
};

void write_manifest(const std::string& path, const std::vector<Record>& records);

// Headerless little-endian s16 PCM at 16 kHz, scaled to [-1, 1).
std::vector<double> load_waveform(const Dataset& data, const Record& rec);
void write_waveform(const std::string& path, const std::vector<double>& samples);

// Headerless little-endian f32 dump, dims from the record.
Tensor load_tensor_payload(const Dataset& data, const Record& rec);
void write_tensor_payload(const std::string& path, const Tensor& t);

}  // namespace skillnet
