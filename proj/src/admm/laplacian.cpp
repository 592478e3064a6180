#include "mfeit/admm/laplacian.hpp"

#include <vector>

namespace mfeit::admm {

Eigen::SparseMatrix<double> laplacian(const fem::PixelGrid& grid) {
  const int n = grid.n();
  const int h = grid.height();
  const int w = grid.width();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(n) * 5);
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  for (int i = 0; i < n; ++i) {
    const int cell = grid.cell_of(i);
    const int r = cell / w;
    const int c = cell % w;
    int degree = 0;
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k];
      const int cc = c + dc[k];
      if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
      const int j = grid.index_of(rr * w + cc);
      if (j < 0) continue;
      t.emplace_back(i, j, -1.0);
      ++degree;
    }
    t.emplace_back(i, i, static_cast<double>(degree));
  }
  Eigen::SparseMatrix<double> l(n, n);
  l.setFromTriplets(t.begin(), t.end());
  return l;
}

}  // namespace mfeit::admm
