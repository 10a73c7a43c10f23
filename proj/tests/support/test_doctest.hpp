#pragma once

// libtorch's fallback logging defines a CHECK macro; doctest's must win.
#include <torch/torch.h>
#undef CHECK

#include "doctest.h"
