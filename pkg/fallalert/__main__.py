#   __       _ _       _           _
#  / _| __ _| | | __ _| | ___ _ __| |_
# | |_ / _` | | |/ _` | |/ _ \ '__| __|
# |  _| (_| | | | (_| | |  __/ |  | |_
# |_|  \__,_|_|_|\__,_|_|\___|_|   \__|


"""
Fall Alert
~~~~~~~~~~~~~~~~~~~~~

Fall detection on a wearable IMU plus identification of the activity
performed right before the fall, reported to a caretaker.

"""

import sys

from fallalert import app

if __name__ == "__main__":
    sys.exit(app.run())
