"""
A lazily created, shared requests session for webhook notifications.
"""

import requests
from requests.adapters import HTTPAdapter

DEFAULT_RETRIES = 3


class SessionFactory:
    def __init__(self, retries: int = DEFAULT_RETRIES):
        self.session = None
        self.retries = retries

    def get(self):
        if self.session is None:
            self.session = requests.session()
            adapter = HTTPAdapter(max_retries=self.retries)
            self.session.mount("https://", adapter)
            self.session.mount("http://", adapter)
        return self.session


sessions = SessionFactory()
