#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace clvqa {

// Shared token table over scene, question and answer tokens of all tasks.
// Built once after stream generation and frozen afterwards.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;

  Vocabulary();

  // non-reserved tokens are sorted before id assignment, so the mapping is a
  // pure function of the token set
  static Vocabulary build(const std::vector<std::string>& tokens);

  int add(const std::string& token);
  int id(const std::string& token) const;          // throws on unknown token
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // "token<TAB>id" lines
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace clvqa
