#pragma once

// Mean and population standard deviation in 50-digit decimal arithmetic.

#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

namespace oracle {

using Big = boost::multiprecision::cpp_dec_float_50;

struct MeanStd {
  Big mean;
  Big std;
};

inline MeanStd mean_std(const std::vector<float>& xs) {
  Big sum = 0;
  for (float x : xs) sum += Big(x);
  const Big n(static_cast<int>(xs.size()));
  const Big mean = sum / n;
  Big sq = 0;
  for (float x : xs) sq += (Big(x) - mean) * (Big(x) - mean);
  return {mean, boost::multiprecision::sqrt(sq / n)};
}

}  // namespace oracle
