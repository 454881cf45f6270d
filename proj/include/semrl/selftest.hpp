#pragma once

#include <iosfwd>

namespace semrl {

/// Quick invariant suite behind `semrl selftest`: fusion bound, group
/// standardization, trie normalization, analytic vs numeric gradients, metric
/// oracles and codebook round trips. Prints one line per check.
bool run_selftest(std::ostream& out);

}  // namespace semrl
