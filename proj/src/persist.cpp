#include "rap/persist.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <set>
#include <sstream>

#include "rap/common.hpp"
#include "rap/wire.hpp"

#ifdef _WIN32
#include <io.h>
#define rap_fsync _commit
#define rap_fileno _fileno
#else
#include <unistd.h>
#define rap_fsync fsync
#define rap_fileno fileno
#endif

namespace rap {

using namespace wire;

namespace {
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeF32 = 0;
constexpr int kMaxRank = 8;
}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::set<std::string> seen;
  for (const auto& [name, t] : ck.tensors) {
    if (name.empty()) throw FormatError("checkpoint tensor with empty name");
    if (!seen.insert(name).second) throw FormatError("duplicate checkpoint tensor " + name);
    if (t.rank() > kMaxRank)
      throw FormatError("checkpoint tensor " + name + " has rank " + std::to_string(t.rank()));
  }

  std::ostringstream payload;
  std::ostringstream table;
  uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    wr_u32(table, uint32_t(name.size()));
    table.write(name.data(), std::streamsize(name.size()));
    wr_u32(table, kDtypeF32);
    wr_u32(table, uint32_t(t.rank()));
    for (int d : t.shape) wr_u32(table, checked_dim(d, "tensor dim"));
    wr_u64(table, offset);
    for (size_t i = 0; i < t.numel(); ++i) wr_f32(payload, t[i]);
    offset += 4 * uint64_t(t.numel());
  }
  std::string pl = payload.str();
  uint32_t crc = crc32_update(0, pl.data(), pl.size());

  std::ostringstream file;
  file.write("RAPC", 4);
  wr_u32(file, kVersion);
  wr_u64(file, uint64_t(ck.config_text.size()));
  file.write(ck.config_text.data(), std::streamsize(ck.config_text.size()));
  wr_u32(file, uint32_t(ck.tensors.size()));
  std::string tb = table.str();
  file.write(tb.data(), std::streamsize(tb.size()));
  wr_u64(file, uint64_t(pl.size()));
  file.write(pl.data(), std::streamsize(pl.size()));
  wr_u32(file, crc);
  std::string bytes = file.str();

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError("cannot write " + path + ": " + std::strerror(errno));
  bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  ok = std::fflush(f) == 0 && ok;
  ok = rap_fsync(rap_fileno(f)) == 0 && ok;
  ok = std::fclose(f) == 0 && ok;
  if (!ok) throw FormatError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto f = open_in(path);
  expect_magic(f, "RAPC", path);
  uint32_t ver = rd_u32(f, "version");
  if (ver != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(ver) +
                      ", this build reads version " + std::to_string(kVersion));
  Checkpoint ck;
  uint64_t clen = rd_u64(f, "config length");
  if (clen > (1u << 20)) throw FormatError(path + ": config blob implausibly large");
  ck.config_text.resize(static_cast<size_t>(clen));
  f.read(ck.config_text.data(), std::streamsize(clen));
  if (!f) throw FormatError(path + ": truncated while reading config blob");

  uint32_t count = rd_u32(f, "tensor count");
  struct Entry {
    std::string name;
    std::vector<int> shape;
    uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  uint64_t expected_offset = 0;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    uint32_t nlen = rd_u32(f, "tensor name length");
    if (nlen == 0 || nlen > 4096) throw FormatError(path + ": bad tensor name length");
    e.name.resize(nlen);
    f.read(e.name.data(), std::streamsize(nlen));
    if (!f) throw FormatError(path + ": truncated while reading tensor name");
    uint32_t dtype = rd_u32(f, "tensor dtype");
    if (dtype != kDtypeF32)
      throw FormatError(path + ": tensor " + e.name + " has unsupported dtype " +
                        std::to_string(dtype));
    uint32_t rank = rd_u32(f, "tensor rank");
    if (rank > kMaxRank) throw FormatError(path + ": tensor " + e.name + " has bad rank");
    uint64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = rd_u32(f, "tensor dim");
      if (dim == 0 || dim > (1u << 28)) throw FormatError(path + ": bad dim in " + e.name);
      e.shape.push_back(int(dim));
      numel *= dim;
    }
    if (numel > (1u << 30)) throw FormatError(path + ": tensor " + e.name + " implausibly large");
    e.offset = rd_u64(f, "tensor offset");
    if (e.offset != expected_offset)
      throw FormatError(path + ": tensor " + e.name + " offset " + std::to_string(e.offset) +
                        ", expected " + std::to_string(expected_offset));
    expected_offset += 4 * numel;
    entries.push_back(std::move(e));
  }

  uint64_t plen = rd_u64(f, "payload length");
  if (plen != expected_offset)
    throw FormatError(path + ": payload length " + std::to_string(plen) +
                      " does not match tensor table " + std::to_string(expected_offset));
  std::string payload(static_cast<size_t>(plen), '\0');
  f.read(payload.data(), std::streamsize(plen));
  if (!f) throw FormatError(path + ": truncated while reading payload");
  uint32_t crc = rd_u32(f, "checksum");
  if (crc != crc32_update(0, payload.data(), payload.size()))
    throw FormatError(path + ": checksum mismatch, file corrupt");
  if (f.peek() != std::char_traits<char>::eof())
    throw FormatError(path + ": trailing bytes after checksum");

  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (auto& e : entries) {
    Tensor t(std::move(e.shape));
    const unsigned char* src = p + e.offset;
    for (size_t i = 0; i < t.numel(); ++i) {
      uint32_t u = uint32_t(src[4 * i]) | uint32_t(src[4 * i + 1]) << 8 |
                   uint32_t(src[4 * i + 2]) << 16 | uint32_t(src[4 * i + 3]) << 24;
      std::memcpy(&t.data()[i], &u, 4);
    }
    ck.tensors.emplace_back(std::move(e.name), std::move(t));
  }
  return ck;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const std::string* find_kv(const KvFile& kv, const std::string& key) {
  for (const auto& [k, v] : kv.items)
    if (k == key) return &v;
  return nullptr;
}

}  // namespace

bool KvFile::has(const std::string& key) const { return find_kv(*this, key) != nullptr; }

const std::string& KvFile::get_str(const std::string& key) const {
  const std::string* v = find_kv(*this, key);
  if (!v) throw FormatError("missing config key '" + key + "'");
  return *v;
}

double KvFile::get_num(const std::string& key) const {
  const std::string& s = get_str(key);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size() || s.empty())
    throw FormatError("config key '" + key + "': bad number '" + s + "'");
  return v;
}

long KvFile::get_int(const std::string& key) const {
  const std::string& s = get_str(key);
  char* end = nullptr;
  errno = 0;
  long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size() || s.empty())
    throw FormatError("config key '" + key + "': bad integer '" + s + "'");
  return v;
}

std::string KvFile::get_str(const std::string& key, const std::string& fallback) const {
  const std::string* v = find_kv(*this, key);
  return v ? *v : fallback;
}

double KvFile::get_num(const std::string& key, double fallback) const {
  return has(key) ? get_num(key) : fallback;
}

long KvFile::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : items)
    if (k == key) {
      v = value;
      return;
    }
  items.emplace_back(key, value);
}

KvFile parse_kv(const std::string& text) {
  KvFile kv;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(lineno) + ": expected key=value, got '" +
                        t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.has(key))
      throw FormatError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.items.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KvFile read_kv(const std::string& path) {
  auto f = open_in(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_kv(ss.str());
}

std::string render_kv(const KvFile& kv) {
  std::string out;
  for (const auto& [k, v] : kv.items) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace rap
