# runlocal.py

import os
import sys
from django.core.management import execute_from_command_line

if __name__ == '__main__':
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'timestepping.settings')

    # Simulate the command: python manage.py nse3d run --config configs/shear.ini --progress
    config = sys.argv[1] if len(sys.argv) > 1 else os.path.join('configs', 'shear.ini')
    sys.argv = ['runlocal.py', 'nse3d', 'run', '--config', config, '--progress']

    execute_from_command_line(sys.argv)
