// SPDX-License-Identifier: Apache-2.0
#include "smp/commands.hpp"

int main(int argc, char** argv) { return smp::cmd_dispatch(argc, argv); }
