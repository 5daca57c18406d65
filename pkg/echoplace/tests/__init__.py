import django

from echoplace.conf import configure_settings

configure_settings()
django.setup()
