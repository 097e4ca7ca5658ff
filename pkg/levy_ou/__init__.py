# -*- coding: utf-8 -*-

PACKAGE_VERSION = "0.4.2"
