#include "fsg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsg/errors.hpp"

namespace fsg {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'G', 'N'};
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct Contents {
  FsgnetConfig cfg;
  std::vector<Record> records;
};

// Cursor over the whole file with bounds-checked reads.
class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(path_ + ": truncated checkpoint reading " + what + " (need " +
                      std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                      " left)");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open checkpoint");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FsgnetConfig read_header(Reader& r) {
  const char* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(r.path() + ": bad checkpoint magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError(r.path() + ": checkpoint version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::uint32_t len = r.u32("config length");
  const char* text = r.take(len, "config");
  try {
    return nlohmann::json::parse(text, text + len).get<FsgnetConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(r.path() + ": bad config blob: " + e.what());
  }
}

Contents read_all(const std::string& path) {
  Reader r(slurp(path), path);
  Contents c;
  c.cfg = read_header(r);
  const std::uint32_t count = r.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const std::uint32_t name_len = r.u32("name length");
    if (name_len > kMaxNameLen) throw DataError(path + ": implausible record name length");
    rec.name.assign(r.take(name_len, "record name"), name_len);
    const std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank) throw DataError(path + ": implausible rank for " + rec.name);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.u32("dims"));
      n *= rec.dims.back();
    }
    if (n > (std::uint64_t{1} << 32)) throw DataError(path + ": implausible size for " + rec.name);
    const char* payload = r.take(n * 4, "payload");
    rec.values.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto* p = reinterpret_cast<const unsigned char*>(payload + 4 * k);
      const std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                                 std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
      rec.values[k] = std::bit_cast<float>(bits);
    }
    c.records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw DataError(path + ": trailing bytes after last record");
  return c;
}

std::vector<NamedTensor<float>> all_tensors(Fsgnet<float>& net) {
  ParamCollector<float> col = collect(net);
  std::vector<NamedTensor<float>> out = col.params;
  out.insert(out.end(), col.buffers.begin(), col.buffers.end());
  return out;
}

void fill_from(Fsgnet<float>& net, const Contents& c, const std::string& path) {
  std::vector<NamedTensor<float>> targets = all_tensors(net);
  if (targets.size() != c.records.size()) {
    throw DataError(path + ": checkpoint holds " + std::to_string(c.records.size()) +
                    " tensors, network expects " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Record& rec = c.records[i];
    NamedTensor<float>& t = targets[i];
    if (rec.name != t.name) {
      throw DataError(path + ": record " + std::to_string(i) + " is '" + rec.name +
                      "', network expects '" + t.name + "'");
    }
    const Shape s = t.tensor.shape();
    const std::vector<std::uint32_t> want{std::uint32_t(s.n), std::uint32_t(s.c),
                                          std::uint32_t(s.h), std::uint32_t(s.w)};
    if (rec.dims != want) {
      throw DataError(path + ": shape mismatch for '" + rec.name + "', network expects " +
                      s.str());
    }
  }
  // Only copy once every record has passed, so a bad file leaves the
  // network untouched.
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto dst = targets[i].tensor.data();
    std::copy(c.records[i].values.begin(), c.records[i].values.end(), dst.begin());
  }
}

}  // namespace

void save_checkpoint(Fsgnet<float>& net, const std::string& path) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(net.cfg).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const std::vector<NamedTensor<float>> tensors = all_tensors(net);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    const Shape s = t.tensor.shape();
    put_u32(out, 4);
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(path + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError(path + ": write failed");
}

Fsgnet<float> load_checkpoint(const std::string& path) {
  const Contents c = read_all(path);
  Fsgnet<float> net;
  try {
    net = build_network<float>(c.cfg, 0);
  } catch (const ShapeError& e) {
    throw DataError(path + ": stored config is invalid: " + e.what());
  }
  fill_from(net, c, path);
  return net;
}

void load_checkpoint_into(Fsgnet<float>& net, const std::string& path) {
  fill_from(net, read_all(path), path);
}

FsgnetConfig read_checkpoint_config(const std::string& path) {
  Reader r(slurp(path), path);
  return read_header(r);
}

}  // namespace fsg
