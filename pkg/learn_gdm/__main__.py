# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import learn_gdm.cli

learn_gdm.cli.run()
