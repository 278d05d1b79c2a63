// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/cli.hpp"

int main(int argc, char** argv) { return catbert::dispatch(argc, argv); }
