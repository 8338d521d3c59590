#include "genet/ini.hpp"

#include <algorithm>
#include <sstream>

#include "genet/error.hpp"

namespace genet {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

IniDocument IniDocument::parse(std::string_view text, const std::string& origin) {
  IniDocument doc;
  doc.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line[0] == '#' || line[0] == ';') {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::kConfig, where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) fail(ErrorCode::kConfig, where + ": empty section name");
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kConfig, where + ": expected 'key = value'");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      if (key.empty()) fail(ErrorCode::kConfig, where + ": empty key");
      if (section.empty()) fail(ErrorCode::kConfig, where + ": key '" + key + "' outside a section");
      const std::string full = section + "." + key;
      if (doc.has(full)) fail(ErrorCode::kConfig, where + ": duplicate key '" + full + "'");
      doc.index_[full] = doc.entries_.size();
      doc.entries_.push_back({full, trim(std::string_view(line).substr(eq + 1)), line_no});
    }
    if (end == text.size()) break;
  }
  return doc;
}

bool IniDocument::has(const std::string& key) const { return index_.count(key) != 0; }

const std::string& IniDocument::get(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) fail(ErrorCode::kConfig, origin_ + ": missing key '" + key + "'");
  return entries_[it->second].value;
}

std::string IniDocument::get_or(const std::string& key, const std::string& fallback) const {
  auto it = index_.find(key);
  return it == index_.end() ? fallback : entries_[it->second].value;
}

std::size_t IniDocument::line_of(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? 0 : entries_[it->second].line;
}

void IniDocument::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].value = value;
    return;
  }
  if (key.find('.') == std::string::npos) {
    fail(ErrorCode::kConfig, "key '" + key + "' must have the form section.key");
  }
  index_[key] = entries_.size();
  entries_.push_back({key, value, 0});
}

void IniDocument::erase_section(const std::string& section) {
  std::vector<Entry> kept;
  for (auto& e : entries_) {
    if (e.key.rfind(section + ".", 0) != 0) kept.push_back(std::move(e));
  }
  entries_ = std::move(kept);
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].key] = i;
}

std::string IniDocument::to_string() const {
  // Group by section in first-appearance order.
  std::vector<std::string> sections;
  for (const auto& e : entries_) {
    const std::string s = e.key.substr(0, e.key.find('.'));
    if (std::find(sections.begin(), sections.end(), s) == sections.end()) sections.push_back(s);
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) os << '\n';
    os << '[' << sections[i] << "]\n";
    for (const auto& e : entries_) {
      const auto dot = e.key.find('.');
      if (e.key.substr(0, dot) == sections[i]) os << e.key.substr(dot + 1) << " = " << e.value << '\n';
    }
  }
  return os.str();
}

}  // namespace genet
