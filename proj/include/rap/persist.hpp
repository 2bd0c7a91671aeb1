#pragma once
// Checkpoint files and plain-text key=value configuration.
//
// A checkpoint holds a config text blob plus a named tensor table with a
// CRC-32 over the payload.  The writer emits no timestamps or other
// environment state, so identical inputs produce byte-identical files.

#include <string>
#include <utility>
#include <vector>

#include "rap/tensor.hpp"

namespace rap {

struct Checkpoint {
  std::string config_text;  // key=value lines describing the run
  std::vector<std::pair<std::string, Tensor>> tensors;  // ordered by name at save
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Ordered key=value file with '#' comments.  Lookups that miss throw
// FormatError naming the key; duplicate keys are rejected at parse time.
struct KvFile {
  std::vector<std::pair<std::string, std::string>> items;

  bool has(const std::string& key) const;
  const std::string& get_str(const std::string& key) const;
  double get_num(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  void set(const std::string& key, const std::string& value);  // insert or replace
};

KvFile parse_kv(const std::string& text);
KvFile read_kv(const std::string& path);
std::string render_kv(const KvFile& kv);

}  // namespace rap
