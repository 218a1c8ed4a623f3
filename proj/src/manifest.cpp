#include "skillnet/manifest.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "skillnet/errors.hpp"

namespace skillnet {

std::string escape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      switch (s[i]) {
        case '\\': out.push_back('\\'); break;
        case 't': out.push_back('\t'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        default: out.push_back(s[i]);
      }
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

namespace {

std::vector<int> parse_dims(const std::string& s) {
  std::vector<int> dims;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty()) throw InputError("manifest: bad dims '" + s + "'");
    dims.push_back(std::stoi(part));
  }
  return dims;
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::string out;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out;
}

std::string payload_field(const Record& r) {
  if (!r.file.empty()) {
    std::string p = "file:" + r.file;
    if (!r.dims.empty()) p += ";dims=" + dims_to_string(r.dims);
    return p;
  }
  if (r.modality == Skill::code) return "code:" + escape_field(r.text);
  return "text:" + escape_field(r.text);
}

std::string meta_field(const Record& r) {
  if (r.label >= 0) return "label:" + std::to_string(r.label);
  if (!r.ref.empty()) return "ref:" + escape_field(r.ref);
  if (!r.caption.empty()) return "text:" + escape_field(r.caption);
  return "-";
}

std::string manifest_dir(const std::string& path) {
  auto slash = path.find_last_of('/');
  if (slash == std::string::npos) return ".";
  return path.substr(0, slash);
}

}  // namespace

void write_manifest(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write manifest '" + path + "'");
  for (const auto& r : records) {
    os << r.id << '\t' << skill_name(r.modality) << '\t' << r.split << '\t' << payload_field(r)
       << '\t' << meta_field(r) << '\n';
  }
}

Dataset Dataset::load(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw InputError("cannot open manifest '" + manifest_path + "'");
  Dataset ds;
  ds.dir_ = manifest_dir(manifest_path);
  std::set<std::pair<std::string, std::string>> ids;  // (split, id)
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 5) {
      throw InputError("manifest line " + std::to_string(lineno) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    Record r;
    r.id = fields[0];
    r.modality = skill_from_name(fields[1]);
    r.split = fields[2];
    if (!ids.insert({r.split, r.id}).second) {
      throw InputError("manifest: duplicate id '" + r.id + "' in split '" + r.split + "'");
    }
    const std::string& payload = fields[3];
    if (payload.rfind("text:", 0) == 0) {
      r.text = unescape_field(payload.substr(5));
    } else if (payload.rfind("code:", 0) == 0) {
      r.text = unescape_field(payload.substr(5));
    } else if (payload.rfind("file:", 0) == 0) {
      std::string rest = payload.substr(5);
      auto semi = rest.find(";dims=");
      if (semi != std::string::npos) {
        r.dims = parse_dims(rest.substr(semi + 6));
        rest = rest.substr(0, semi);
      }
      r.file = rest;
    } else {
      throw InputError("manifest line " + std::to_string(lineno) + ": bad payload field");
    }
    const std::string& meta = fields[4];
    if (meta.rfind("label:", 0) == 0) {
      r.label = std::stoi(meta.substr(6));
    } else if (meta.rfind("ref:", 0) == 0) {
      r.ref = unescape_field(meta.substr(4));
    } else if (meta.rfind("text:", 0) == 0) {
      r.caption = unescape_field(meta.substr(5));
    } else if (meta != "-") {
      throw InputError("manifest line " + std::to_string(lineno) + ": bad meta field");
    }
    ds.records_.push_back(std::move(r));
  }
  return ds;
}

std::vector<const Record*> Dataset::select(Skill modality, const std::string& split) const {
  std::vector<const Record*> out;
  for (const auto& r : records_) {
    if (r.modality == modality && r.split == split) out.push_back(&r);
  }
  return out;
}

std::vector<double> load_waveform(const Dataset& data, const Record& rec) {
  const std::string path = data.dir() + "/" + rec.file;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open waveform '" + path + "'");
  is.seekg(0, std::ios::end);
  const std::streamoff bytes = is.tellg();
  is.seekg(0);
  if (bytes % 2 != 0) throw InputError("waveform '" + path + "' has an odd byte count");
  std::vector<int16_t> raw((size_t)(bytes) / 2);
  is.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!is) throw InputError("short read on waveform '" + path + "'");
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = double(raw[i]) / 32768.0;
  return out;
}

void write_waveform(const std::string& path, const std::vector<double>& samples) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write waveform '" + path + "'");
  for (double s : samples) {
    double clipped = std::max(-1.0, std::min(1.0 - 1.0 / 32768.0, s));
    int16_t v = int16_t(std::lround(clipped * 32768.0));
    os.write(reinterpret_cast<const char*>(&v), 2);
  }
}

Tensor load_tensor_payload(const Dataset& data, const Record& rec) {
  if (rec.dims.empty()) {
    throw InputError("record '" + rec.id + "' has a tensor payload without dims");
  }
  const std::string path = data.dir() + "/" + rec.file;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open payload '" + path + "'");
  int64_t n = 1;
  for (int d : rec.dims) n *= d;
  std::vector<float> raw((size_t)(n));
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(n * 4));
  if (!is) throw InputError("short read on payload '" + path + "'");
  std::vector<double> vals(raw.begin(), raw.end());
  return Tensor::from_values(rec.dims, std::move(vals));
}

void write_tensor_payload(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write payload '" + path + "'");
  for (double v : t.values()) {
    float f = float(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
}

}  // namespace skillnet
