#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dg::vocab {

// Fixed template vocabulary. Id 0 pads empty sentence slots, id 1 is the
// word-erasure substitute; both are "special" and never produced by encode().
inline constexpr int64_t kPad = 0;
inline constexpr int64_t kMask = 1;

int64_t size();
const std::vector<std::string>& words();
int64_t id(const std::string& word);

int64_t num_classes();
const std::vector<std::string>& class_names();
int64_t class_token(int64_t class_id);

std::vector<int64_t> encode(const std::string& text);
std::string decode(const std::vector<int64_t>& ids);

// One "token<TAB>id" pair per line.
void save(const std::string& path);

}  // namespace dg::vocab
