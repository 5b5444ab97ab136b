#include "clvqa/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "clvqa/errors.hpp"

namespace clvqa {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
}

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens) {
  Vocabulary v;
  std::set<std::string> uniq(tokens.begin(), tokens.end());
  for (const std::string& t : uniq) {
    if (!v.contains(t)) v.add(t);
  }
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_[token] = id;
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) throw data_error("vocabulary: unknown token '" + token + "'");
  return it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw contract_error("vocabulary: id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("vocabulary: cannot open " + path + " for writing");
  for (int i = 0; i < size(); ++i) {
    os << id_to_token_[static_cast<std::size_t>(i)] << '\t' << i << '\n';
  }
  if (!os) throw data_error("vocabulary: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("vocabulary: cannot open " + path);
  Vocabulary v;
  v.id_to_token_.clear();
  v.token_to_id_.clear();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw data_error("vocabulary: malformed line " + std::to_string(lineno) + " in " + path);
    }
    const std::string token = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.id_to_token_.size())) {
      throw data_error("vocabulary: non-contiguous id at line " + std::to_string(lineno));
    }
    if (v.token_to_id_.count(token)) {
      throw data_error("vocabulary: duplicate token '" + token + "' at line " +
                       std::to_string(lineno));
    }
    v.id_to_token_.push_back(token);
    v.token_to_id_[token] = id;
  }
  if (v.size() < 3) throw data_error("vocabulary: missing reserved tokens in " + path);
  return v;
}

}  // namespace clvqa
