#pragma once

namespace coinfake {

/// Selects between the serial reference path of a kernel and its OpenMP path.
/// Both paths produce bit-identical results.
enum class Exec { Serial, Parallel };

}  // namespace coinfake
