#include "envcore/fixtures.hpp"

namespace envcore {

namespace {

constexpr int kGirls = 11;
constexpr int kBoys = 16;
constexpr int kOutlier = kGirls + 12;  // zero-based row of boy 13

constexpr double kDistances[kGirls + kBoys][4] = {
    {21.0, 20.0, 21.5, 23.0}, {21.0, 21.5, 24.0, 25.5}, {20.5, 24.0, 24.5, 26.0}, {23.5, 24.5, 25.0, 26.5},
    {21.5, 23.0, 22.5, 23.5}, {20.0, 21.0, 21.0, 22.5}, {21.5, 22.5, 23.0, 25.0}, {23.0, 23.0, 23.5, 24.0},
    {20.0, 21.0, 22.0, 21.5}, {16.5, 19.0, 19.0, 19.5}, {24.5, 25.0, 28.0, 28.0},
    {26.0, 25.0, 29.0, 31.0}, {21.5, 22.5, 23.0, 26.5}, {23.0, 22.5, 24.0, 27.5}, {25.5, 27.5, 26.5, 27.0},
    {20.0, 23.5, 22.5, 26.0}, {24.5, 25.5, 27.0, 28.5}, {22.0, 22.0, 24.5, 26.5}, {24.0, 21.5, 24.5, 25.5},
    {23.0, 20.5, 31.0, 26.0}, {27.5, 28.0, 31.0, 31.5}, {23.0, 23.0, 23.5, 25.0}, {21.5, 23.5, 24.0, 28.0},
    {17.0, 24.5, 26.0, 29.5}, {22.5, 25.5, 25.5, 26.0}, {23.0, 24.5, 26.0, 30.0}, {22.0, 21.5, 23.5, 25.0},
};

}  // namespace

Dataset dental_dataset(bool drop_outlier) {
  const int n = kGirls + kBoys - (drop_outlier ? 1 : 0);
  MatrixXd Y(n, 4);
  MatrixXd X(n, 1);
  int row = 0;
  for (int i = 0; i < kGirls + kBoys; ++i) {
    if (drop_outlier && i == kOutlier) continue;
    for (int j = 0; j < 4; ++j) Y(row, j) = kDistances[i][j];
    X(row, 0) = i < kGirls ? 0.0 : 1.0;
    ++row;
  }
  return make_dataset(std::move(Y), std::move(X), {"age8", "age10", "age12", "age14"}, {"male"});
}

VectorXd dental_ages() { return (VectorXd(4) << 8.0, 10.0, 12.0, 14.0).finished(); }

std::string dental_metadata() {
  return "Potthoff and Roy (1964) dental growth data; 11 girls, 16 boys; "
         "removed case: boy 13 (subject 24), distances 17, 24.5, 26, 29.5";
}

}  // namespace envcore
