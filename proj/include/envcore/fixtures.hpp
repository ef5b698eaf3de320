#pragma once

#include <string>

#include "envcore/model.hpp"

namespace envcore {

// Potthoff–Roy dental growth data: distance (mm) at ages 8, 10, 12, 14;
// X = 1 for boys, 0 for girls. The default drops boy 13 (overall subject 24,
// distances 17, 24.5, 26, 29.5), the outlying male case, leaving n = 26.
Dataset dental_dataset(bool drop_outlier = true);
VectorXd dental_ages();
std::string dental_metadata();

}  // namespace envcore
