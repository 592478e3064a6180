#pragma once

#include <vector>

namespace mfeit::fem {

struct Drive {
  int source = 0;  // +1 unit current
  int sink = 1;    // -1 unit current
};

struct Measurement {
  int plus = 0;
  int minus = 1;
};

/// One retained differential channel: drive pair i=(i,i+1) read on pair j=(j,j+1).
struct Channel {
  int drive = 0;
  int pair = 0;
};

/// Adjacent stimulation / adjacent measurement cycle.
///
/// Of the n*(n-3) raw channels only those with drive index < measurement pair
/// index are kept; each dropped channel equals a retained one by reciprocity.
/// Channel order is drive-major, measurement-minor.
struct StimProtocol {
  int n_electrodes = 0;
  int raw_count = 0;
  std::vector<Drive> drives;
  std::vector<std::vector<Measurement>> measures;  // retained, per drive
  std::vector<Channel> channels;

  int m() const { return static_cast<int>(channels.size()); }

  /// Channel index for the unordered pair {drive a, pair b}, or -1 if the pairs share an electrode.
  int channel_index(int a, int b) const;

  /// Index of the channel obtained by rotating both pairs of channel k by `shift` electrodes.
  int rotated_channel(int k, int shift) const;
};

StimProtocol adjacent_protocol(int n_electrodes);

}  // namespace mfeit::fem
