#include "mfeit/fem/protocol.hpp"

#include <string>
#include <utility>

#include "mfeit/error.hpp"

namespace mfeit::fem {

namespace {

bool pairs_disjoint(int a, int b, int n) {
  const int a1 = (a + 1) % n;
  const int b1 = (b + 1) % n;
  return a != b && a != b1 && a1 != b && a1 != b1;
}

}  // namespace

StimProtocol adjacent_protocol(int n_electrodes) {
  if (n_electrodes < 4) throw ConfigError("adjacent protocol needs >= 4 electrodes, got " + std::to_string(n_electrodes));
  const int n = n_electrodes;
  StimProtocol p;
  p.n_electrodes = n;
  p.measures.resize(n);
  for (int i = 0; i < n; ++i) {
    p.drives.push_back({i, (i + 1) % n});
    for (int j = 0; j < n; ++j) {
      if (!pairs_disjoint(i, j, n)) continue;
      ++p.raw_count;
      if (i < j) {
        p.measures[i].push_back({j, (j + 1) % n});
        p.channels.push_back({i, j});
      }
    }
  }
  return p;
}

int StimProtocol::channel_index(int a, int b) const {
  if (a > b) std::swap(a, b);
  for (int k = 0; k < m(); ++k) {
    if (channels[k].drive == a && channels[k].pair == b) return k;
  }
  return -1;
}

int StimProtocol::rotated_channel(int k, int shift) const {
  const int n = n_electrodes;
  const int s = ((shift % n) + n) % n;
  return channel_index((channels[k].drive + s) % n, (channels[k].pair + s) % n);
}

}  // namespace mfeit::fem
