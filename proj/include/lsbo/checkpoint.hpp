#pragma once

#include <string>

#include "lsbo/gp.hpp"
#include "lsbo/vae.hpp"

namespace lsbo {

// Versioned text checkpoints shared by both model kinds. A file starts
// with "lsbo-model 1 <kind>", then a dims line, then one block per tensor
// in a fixed order: "<name> <rows> <cols>" followed by the entries in row
// major order, printed with g17 so every double round-trips exactly.

void save_vae(const std::string& path, const VaeModel& m);
VaeModel load_vae(const std::string& path);

void save_gplvm(const std::string& path, const GplvmModel& m);
GplvmModel load_gplvm(const std::string& path);

}  // namespace lsbo
