#include "dg/vocab.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dg/tensor.hpp"

namespace dg::vocab {

namespace {

const std::vector<std::string> kClassNames = {"chair", "table",   "sofa",  "bed",  "lamp",
                                              "shelf", "cabinet", "plant", "desk", "monitor"};

std::vector<std::string> build_words() {
  std::vector<std::string> w = {"<pad>", "<mask>", "the",    "largest", "smallest", "closest",
                                "farthest", "nearest", "left", "right",   "front",    "behind",
                                "in",       "of",      "to",   "from",    "it",       "room",
                                "center",   "wall",    "."};
  for (const auto& c : kClassNames) w.push_back(c);
  return w;
}

const std::vector<std::string>& word_list() {
  static const std::vector<std::string> w = build_words();
  return w;
}

const std::unordered_map<std::string, int64_t>& index() {
  static const std::unordered_map<std::string, int64_t> m = [] {
    std::unordered_map<std::string, int64_t> r;
    const auto& w = word_list();
    for (size_t i = 0; i < w.size(); ++i) r[w[i]] = static_cast<int64_t>(i);
    return r;
  }();
  return m;
}

}  // namespace

int64_t size() { return static_cast<int64_t>(word_list().size()); }

const std::vector<std::string>& words() { return word_list(); }

int64_t id(const std::string& word) {
  auto it = index().find(word);
  require(it != index().end(), "vocab: unknown word '" + word + "'");
  return it->second;
}

int64_t num_classes() { return static_cast<int64_t>(kClassNames.size()); }

const std::vector<std::string>& class_names() { return kClassNames; }

int64_t class_token(int64_t class_id) {
  require(class_id >= 0 && class_id < num_classes(), "vocab: bad class id");
  return id(kClassNames[static_cast<size_t>(class_id)]);
}

std::vector<int64_t> encode(const std::string& text) {
  std::vector<int64_t> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(id(tok));
  return out;
}

std::string decode(const std::vector<int64_t>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < size(), "vocab: id out of range");
    if (i) out += ' ';
    out += word_list()[static_cast<size_t>(ids[i])];
  }
  return out;
}

void save(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "vocab: cannot open " + path);
  const auto& w = word_list();
  for (size_t i = 0; i < w.size(); ++i) out << w[i] << '\t' << i << '\n';
  require(out.good(), "vocab: write failed for " + path);
}

}  // namespace dg::vocab
