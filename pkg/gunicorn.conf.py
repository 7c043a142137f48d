import os

# Server socket
bind = f"0.0.0.0:{os.environ.get('WGPR_PORT', 8000)}"
backlog = 2048

# Worker processes
workers = int(os.environ.get("WGPR_WORKERS", 2))
worker_class = "uvicorn.workers.UvicornWorker"
timeout = 120
keepalive = 5

max_requests = 1000
max_requests_jitter = 50

# Logging
loglevel = "info"
accesslog = "-"
errorlog = "-"

proc_name = "wgpr-api"

wsgi_app = "app.main:app"
