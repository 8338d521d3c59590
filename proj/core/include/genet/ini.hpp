#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace genet {

// Line-oriented sectioned key/value text:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Entries remember their source line for
// diagnostics; insertion order is preserved for stable re-serialisation.
class IniDocument {
 public:
  struct Entry {
    std::string key;  // dotted path
    std::string value;
    std::size_t line = 0;
  };

  static IniDocument parse(std::string_view text, const std::string& origin = "<text>");

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::size_t line_of(const std::string& key) const;
  // Inserts or replaces.
  void set(const std::string& key, const std::string& value);
  void erase_section(const std::string& section);

  const std::vector<Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }
  std::string to_string() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::string origin_;
};

std::string trim(std::string_view text);
std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace genet
