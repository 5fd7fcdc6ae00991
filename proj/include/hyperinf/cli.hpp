#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hyperinf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// args excludes the program name. Progress goes to err, results to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

// Closest candidate by edit distance, or "" if none is within distance 3.
std::string suggest(const std::string& word, const std::vector<std::string>& candidates);

}  // namespace hyperinf::cli
