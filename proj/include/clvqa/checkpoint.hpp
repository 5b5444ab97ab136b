#pragma once

#include <string>

#include "clvqa/optim.hpp"

namespace clvqa {

// Binary checkpoint: magic "CLVQ1", version u32, array count u32, then per
// array: name length u16, UTF-8 name, rank u8, dims as u32 list, payload as
// little-endian 64-bit floats. A "<path>.frozen" sidecar lists
// "name<TAB>{0,1}" freeze flags.
void save_checkpoint(const ParameterStore& params, const std::string& path);
ParameterStore load_checkpoint(const std::string& path);

}  // namespace clvqa
