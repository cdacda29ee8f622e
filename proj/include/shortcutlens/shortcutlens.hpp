#pragma once

// Engine umbrella header. The HTTP binding (server.hpp) and the command line
// (cli.hpp) are included separately.

#include "shortcutlens/aggregator.hpp"
#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/error.hpp"
#include "shortcutlens/hash.hpp"
#include "shortcutlens/miner.hpp"
#include "shortcutlens/projection.hpp"
#include "shortcutlens/report.hpp"
#include "shortcutlens/service.hpp"
#include "shortcutlens/template.hpp"
#include "shortcutlens/whatif.hpp"
