#pragma once

#include <iosfwd>
#include <string>

#include "selfaffine/digits.hpp"

namespace selfaffine {

/// Binary cache of D_M. The header records A, D, M, the arithmetic mode and
/// tau; reading checks them against the system and throws Io on mismatch.
void write_expansion_set(std::ostream& os, const ExpandingSystem& sys, const ExpansionSet& e);
ExpansionSet read_expansion_set(std::istream& is, const ExpandingSystem& sys);

void save_expansion_set(const std::string& path, const ExpandingSystem& sys, const ExpansionSet& e);
ExpansionSet load_expansion_set(const std::string& path, const ExpandingSystem& sys);

}  // namespace selfaffine
