import pytest

from tts_bridge.engines import ProceduralEngine
from tts_bridge.server import BridgeConfig, run_in_thread, serve


@pytest.fixture(scope="session")
def base_url():
    server = serve(BridgeConfig(port=0), engine=ProceduralEngine())
    run_in_thread(server)
    host, port = server.server_address
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()
